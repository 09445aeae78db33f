#pragma once

#include "subcrit/common.hpp"
#include "subcrit/rng.hpp"
#include "subcrit/spectra.hpp"
#include "subcrit/mp_core.hpp"
#include "subcrit/tw_mc.hpp"
#include "subcrit/quest.hpp"
#include "subcrit/estimators.hpp"
#include "subcrit/inference.hpp"
#include "subcrit/bootstrap.hpp"
#include "subcrit/simharness.hpp"
#include "subcrit/io.hpp"
