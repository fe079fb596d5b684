#pragma once

#include "quasitest/bias.hpp"
#include "quasitest/core.hpp"
#include "quasitest/csv.hpp"
#include "quasitest/error.hpp"
#include "quasitest/marginals.hpp"
#include "quasitest/parallel.hpp"
#include "quasitest/permsample.hpp"
#include "quasitest/procedures.hpp"
#include "quasitest/report.hpp"
#include "quasitest/rng.hpp"
#include "quasitest/simgen.hpp"
#include "quasitest/stats.hpp"

namespace quasitest {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace quasitest
