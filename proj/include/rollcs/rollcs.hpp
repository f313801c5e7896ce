#pragma once

#include "rollcs/core_model.hpp"
#include "rollcs/cs_solver.hpp"
#include "rollcs/errors.hpp"
#include "rollcs/io.hpp"
#include "rollcs/metrics_eval.hpp"
#include "rollcs/rolling_forward.hpp"
#include "rollcs/scenes.hpp"
#include "rollcs/speckle_psf.hpp"
#include "rollcs/transforms.hpp"
