#pragma once

// Convenience umbrella for the whole library.

#include "cmrac/adaptation.hpp"
#include "cmrac/config.hpp"
#include "cmrac/excitation.hpp"
#include "cmrac/harness.hpp"
#include "cmrac/linalg.hpp"
#include "cmrac/plant.hpp"
#include "cmrac/sim.hpp"
