#pragma once

#include "lorachain/bench.hpp"
#include "lorachain/costmodel.hpp"
#include "lorachain/dense.hpp"
#include "lorachain/errors.hpp"
#include "lorachain/mapgen.hpp"
#include "lorachain/plan.hpp"
#include "lorachain/selector.hpp"
#include "lorachain/variants.hpp"
