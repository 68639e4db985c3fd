#pragma once

// Pool-based active-learning simulator for uncertainty-aware multi-output
// regression: MC-dropout regressor with a heteroscedastic objective, plus
// random / uncertainty / k-center / shifted-k-center acquisition strategies.

#include "alsim/acquisition.hpp"
#include "alsim/al_loop.hpp"
#include "alsim/config.hpp"
#include "alsim/dataset.hpp"
#include "alsim/errors.hpp"
#include "alsim/io.hpp"
#include "alsim/model.hpp"
#include "alsim/predict.hpp"
#include "alsim/rng.hpp"
#include "alsim/train.hpp"
