// Umbrella header: Brownian motion, guided bridges and kernel parameter
// estimation on landmark manifolds.
#pragma once

#include "lmbridge/bridge.hpp"
#include "lmbridge/dataset.hpp"
#include "lmbridge/errors.hpp"
#include "lmbridge/geometry.hpp"
#include "lmbridge/inference.hpp"
#include "lmbridge/kernel.hpp"
#include "lmbridge/landmark.hpp"
#include "lmbridge/parallel.hpp"
#include "lmbridge/rng.hpp"
#include "lmbridge/sde.hpp"
