#pragma once

#include "atomsim/stats.hpp"

namespace testing_support {
using namespace atomsim::stats;
} // namespace testing_support
