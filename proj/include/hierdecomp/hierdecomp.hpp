/*
 * Copyright 2026 The hierdecomp Authors
 * SPDX-License-Identifier: Apache-2.0
 */

/// @file hierdecomp.hpp
/// @brief Umbrella header.
#pragma once

#include "common.hpp"
#include "confmat.hpp"
#include "datagen.hpp"
#include "hiernet.hpp"
#include "linkage.hpp"
#include "memcost.hpp"
#include "mlp.hpp"
#include "netselect.hpp"
#include "overlap.hpp"
