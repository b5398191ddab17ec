#pragma once

#include "crf.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "evalharness.hpp"
#include "features.hpp"
#include "fusion.hpp"
#include "hydrosim.hpp"
#include "network.hpp"
#include "random.hpp"
#include "ssvm.hpp"
#include "table.hpp"
