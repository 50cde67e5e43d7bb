#pragma once

#include "disbelief/agent/policy.hpp"
#include "disbelief/agent/ppo.hpp"
#include "disbelief/agent/train.hpp"
