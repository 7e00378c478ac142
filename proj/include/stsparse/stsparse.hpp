#pragma once

// Spatio-temporally sparse optimal control: sparsity functionals, their
// first- and second-order nonsmooth analysis on space-time grids, and a
// semilinear parabolic control application.

#include "config.hpp"
#include "cones.hpp"
#include "errors.hpp"
#include "ext_real.hpp"
#include "grid.hpp"
#include "pde.hpp"
#include "report.hpp"
#include "second_order.hpp"
#include "solver.hpp"
#include "sparsity.hpp"
#include "verify.hpp"
