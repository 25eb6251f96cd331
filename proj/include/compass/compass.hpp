#pragma once

#include "compass/confidence.hpp"
#include "compass/dcar.hpp"
#include "compass/dpr.hpp"
#include "compass/engine.hpp"
#include "compass/errors.hpp"
#include "compass/metrics.hpp"
#include "compass/simulator.hpp"
#include "compass/types.hpp"
