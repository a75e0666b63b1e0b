#pragma once

#include "iiwgee/core_model.hpp"
#include "iiwgee/dropout.hpp"
#include "iiwgee/error.hpp"
#include "iiwgee/harness.hpp"
#include "iiwgee/intensity.hpp"
#include "iiwgee/panel_io.hpp"
#include "iiwgee/parallel.hpp"
#include "iiwgee/rng.hpp"
#include "iiwgee/simulate.hpp"
#include "iiwgee/weights.hpp"
#include "iiwgee/wgee.hpp"
