#pragma once

#include "legendretron/autodiff.hpp"
#include "legendretron/convex_block.hpp"
#include "legendretron/data.hpp"
#include "legendretron/losses.hpp"
#include "legendretron/model.hpp"
#include "legendretron/monotone.hpp"
#include "legendretron/random.hpp"
#include "legendretron/simplex.hpp"
#include "legendretron/stats.hpp"
#include "legendretron/training.hpp"
#include "legendretron/experiment.hpp"
