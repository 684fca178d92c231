#pragma once

// Umbrella header for the whole library.

#include "cem/anm.hpp"
#include "cem/benchmark.hpp"
#include "cem/causal_modules.hpp"
#include "cem/datagen.hpp"
#include "cem/density.hpp"
#include "cem/dependence.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"
#include "cem/io.hpp"
#include "cem/regress.hpp"
#include "cem/scenarios.hpp"
