#pragma once

#include "tsk/config.hpp"
#include "tsk/dataset.hpp"
#include "tsk/diagnostics.hpp"
#include "tsk/error.hpp"
#include "tsk/finite_diff.hpp"
#include "tsk/gradients.hpp"
#include "tsk/hsweep.hpp"
#include "tsk/init.hpp"
#include "tsk/io.hpp"
#include "tsk/model.hpp"
#include "tsk/rng.hpp"
#include "tsk/trainer.hpp"
