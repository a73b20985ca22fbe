#pragma once

#include "loadwave/assoc.hpp"
#include "loadwave/bench.hpp"
#include "loadwave/bits.hpp"
#include "loadwave/channel_sim.hpp"
#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"
#include "loadwave/frequency_ratio.hpp"
#include "loadwave/loadgen.hpp"
#include "loadwave/sysload.hpp"
#include "loadwave/trace_io.hpp"
