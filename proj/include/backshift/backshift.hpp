#pragma once

// Umbrella header for the backShift library.

#include "backshift/dataset.hpp"
#include "backshift/error.hpp"
#include "backshift/feasibility.hpp"
#include "backshift/jointdiag.hpp"
#include "backshift/pipeline.hpp"
#include "backshift/random.hpp"
#include "backshift/scatter.hpp"
#include "backshift/simulator.hpp"
#include "backshift/stability.hpp"
