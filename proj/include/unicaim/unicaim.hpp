// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Device and array
#include "unicaim/device.hpp"
#include "unicaim/array.hpp"

// Operating modes
#include "unicaim/cam.hpp"
#include "unicaim/charge.hpp"
#include "unicaim/mac.hpp"

// Policy, cost, orchestration
#include "unicaim/pruning.hpp"
#include "unicaim/cost.hpp"
#include "unicaim/pipeline.hpp"
#include "unicaim/config.hpp"
#include "unicaim/experiments.hpp"
