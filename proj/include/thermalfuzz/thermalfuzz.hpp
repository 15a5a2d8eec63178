#pragma once

#include "thermalfuzz/campaign.hpp"
#include "thermalfuzz/dvfs.hpp"
#include "thermalfuzz/executors.hpp"
#include "thermalfuzz/kernels.hpp"
#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/mutation.hpp"
#include "thermalfuzz/oracle.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/scheduler.hpp"
#include "thermalfuzz/starter_models.hpp"
#include "thermalfuzz/tensor.hpp"
#include "thermalfuzz/tensor_input.hpp"
#include "thermalfuzz/thermal.hpp"
