#pragma once

#include "disbelief/runner/commands.hpp"
#include "disbelief/runner/config.hpp"
