#pragma once

#include "convbf/audio_io.hpp"
#include "convbf/beamform.hpp"
#include "convbf/bench.hpp"
#include "convbf/config.hpp"
#include "convbf/error.hpp"
#include "convbf/estimation.hpp"
#include "convbf/metrics.hpp"
#include "convbf/numerics.hpp"
#include "convbf/parallel.hpp"
#include "convbf/pipeline.hpp"
#include "convbf/simulate.hpp"
#include "convbf/stft.hpp"
#include "convbf/wpe.hpp"
