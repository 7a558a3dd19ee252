#pragma once

#include "debias_cl/error.hpp"
#include "debias_cl/random.hpp"
#include "debias_cl/tensor.hpp"
#include "debias_cl/autodiff.hpp"
#include "debias_cl/grad_check.hpp"
#include "debias_cl/encoder.hpp"
#include "debias_cl/session.hpp"
#include "debias_cl/losses.hpp"
#include "debias_cl/grad_suite.hpp"
#include "debias_cl/synth_data.hpp"
#include "debias_cl/binary_io.hpp"
#include "debias_cl/dataset_io.hpp"
#include "debias_cl/checkpoint.hpp"
#include "debias_cl/retrieval.hpp"
#include "debias_cl/cl_engine.hpp"
#include "debias_cl/bias_stats.hpp"
#include "debias_cl/report.hpp"
#include "debias_cl/config.hpp"
