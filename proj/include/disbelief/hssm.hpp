#pragma once

#include "disbelief/hssm/elbo.hpp"
#include "disbelief/hssm/inference.hpp"
#include "disbelief/hssm/model.hpp"
#include "disbelief/hssm/online.hpp"
#include "disbelief/hssm/trainer.hpp"
