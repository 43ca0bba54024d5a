#pragma once

#include "coadapt/error.hpp"
#include "coadapt/plant.hpp"
#include "coadapt/reward.hpp"
#include "coadapt/controllers.hpp"
#include "coadapt/human_model.hpp"
#include "coadapt/mlp.hpp"
#include "coadapt/ppo.hpp"
#include "coadapt/environment.hpp"
#include "coadapt/training.hpp"
#include "coadapt/harness.hpp"
#include "coadapt/config.hpp"
#include "coadapt/experiment.hpp"
#include "coadapt/bridge.hpp"
