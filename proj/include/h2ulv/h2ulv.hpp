#pragma once

#include "h2ulv/error.hpp"
#include "h2ulv/dense.hpp"
#include "h2ulv/parallel.hpp"
#include "h2ulv/geometry.hpp"
#include "h2ulv/kernels.hpp"
#include "h2ulv/id.hpp"
#include "h2ulv/batch.hpp"
#include "h2ulv/h2_build.hpp"
#include "h2ulv/ulv_factor.hpp"
#include "h2ulv/ulv_solve.hpp"
#include "h2ulv/oracle.hpp"
#include "h2ulv/comm_sim.hpp"
#include "h2ulv/persist.hpp"
#include "h2ulv/sweep.hpp"
