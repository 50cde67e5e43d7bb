#pragma once

#include "disbelief/belief_oracle/filter.hpp"
