#pragma once

#include "disbelief/evaluation/curves.hpp"
#include "disbelief/evaluation/export.hpp"
#include "disbelief/evaluation/probe.hpp"
#include "disbelief/evaluation/readout.hpp"
