#pragma once

#include "lgmi/core.hpp"
#include "lgmi/estimators.hpp"
#include "lgmi/local_gaussian.hpp"
#include "lgmi/neighbors.hpp"
#include "lgmi/sweep.hpp"
#include "lgmi/synth.hpp"
