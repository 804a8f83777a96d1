#pragma once

#include "mcseg/core/common.hpp"
#include "mcseg/core/grid.hpp"
#include "mcseg/core/rng.hpp"
#include "mcseg/core/tensor.hpp"
#include "mcseg/datapipe/patches.hpp"
#include "mcseg/datapipe/preprocess.hpp"
#include "mcseg/datapipe/split.hpp"
#include "mcseg/datapipe/synthetic.hpp"
#include "mcseg/harness/config.hpp"
#include "mcseg/harness/data.hpp"
#include "mcseg/harness/trainer.hpp"
#include "mcseg/inference/sliding_window.hpp"
#include "mcseg/metrics/metrics.hpp"
#include "mcseg/netarch/checkpoint.hpp"
#include "mcseg/netarch/config.hpp"
#include "mcseg/netarch/network.hpp"
#include "mcseg/objectives/objectives.hpp"
#include "mcseg/uncertainty/uncertainty.hpp"
#include "mcseg/volumes/container.hpp"
#include "mcseg/volumes/types.hpp"
