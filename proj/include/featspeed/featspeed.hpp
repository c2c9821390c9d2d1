#pragma once

#include "featspeed/numerics.hpp"
#include "featspeed/network.hpp"
#include "featspeed/backprop.hpp"
#include "featspeed/diagnostics.hpp"
#include "featspeed/parallel.hpp"
#include "featspeed/scalings.hpp"
#include "featspeed/harness/config.hpp"
#include "featspeed/harness/csv.hpp"
#include "featspeed/harness/svg.hpp"
#include "featspeed/harness/experiments.hpp"
