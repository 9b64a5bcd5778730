#pragma once

#include "analysis.hpp"
#include "config.hpp"
#include "coupling.hpp"
#include "experiments.hpp"
#include "jump_sampler.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "rate_model.hpp"
#include "scaling.hpp"
#include "simulation.hpp"
#include "statistics.hpp"
#include "trajectory.hpp"
