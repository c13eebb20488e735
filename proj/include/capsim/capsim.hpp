#pragma once

// Umbrella header.

#include "capsim/analysis.hpp"
#include "capsim/config.hpp"
#include "capsim/engine.hpp"
#include "capsim/geometry.hpp"
#include "capsim/interference.hpp"
#include "capsim/rng.hpp"
#include "capsim/topology.hpp"
#include "capsim/traffic.hpp"
