// Umbrella header.
#pragma once

#include "ordstab/csv.hpp"
#include "ordstab/dataset_io.hpp"
#include "ordstab/dates.hpp"
#include "ordstab/errors.hpp"
#include "ordstab/evaluation.hpp"
#include "ordstab/event_store.hpp"
#include "ordstab/feature_network.hpp"
#include "ordstab/filterbank.hpp"
#include "ordstab/lbfgs.hpp"
#include "ordstab/ordinal_model.hpp"
#include "ordstab/rng.hpp"
#include "ordstab/stability.hpp"
#include "ordstab/synthetic.hpp"
#include "ordstab/trainer.hpp"
#include "ordstab/version.hpp"
