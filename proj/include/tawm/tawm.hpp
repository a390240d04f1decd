#pragma once

#include "tawm/config.hpp"
#include "tawm/env.hpp"
#include "tawm/errors.hpp"
#include "tawm/evalkit.hpp"
#include "tawm/nn.hpp"
#include "tawm/planner.hpp"
#include "tawm/properties.hpp"
#include "tawm/rng.hpp"
#include "tawm/svg.hpp"
#include "tawm/trainer.hpp"
#include "tawm/transition.hpp"
#include "tawm/worldmodel.hpp"
