#pragma once

#include "dcsim/allocation.hpp"
#include "dcsim/cloud.hpp"
#include "dcsim/common.hpp"
#include "dcsim/deviceflow.hpp"
#include "dcsim/emulation.hpp"
#include "dcsim/engine.hpp"
#include "dcsim/fl.hpp"
#include "dcsim/model.hpp"
#include "dcsim/rate_function.hpp"
#include "dcsim/report.hpp"
#include "dcsim/resources.hpp"
#include "dcsim/rng.hpp"
#include "dcsim/runner.hpp"
#include "dcsim/stats.hpp"
#include "dcsim/trace.hpp"
