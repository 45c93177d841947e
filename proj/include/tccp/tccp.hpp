#pragma once

#include "tccp/error.hpp"
#include "tccp/hashing.hpp"
#include "tccp/data_model.hpp"
#include "tccp/simulator.hpp"
#include "tccp/featurize.hpp"
#include "tccp/pu_core.hpp"
#include "tccp/models.hpp"
#include "tccp/eval.hpp"
#include "tccp/pipeline.hpp"
#include "tccp/config.hpp"
