// Convenience umbrella: the whole library in one include.
#pragma once

#include "aircomp/channel.hpp"
#include "aircomp/cli.hpp"
#include "aircomp/config.hpp"
#include "aircomp/errors.hpp"
#include "aircomp/experiments.hpp"
#include "aircomp/filter_policy.hpp"
#include "aircomp/kf_policy.hpp"
#include "aircomp/linalg.hpp"
#include "aircomp/oracles.hpp"
#include "aircomp/power_opt.hpp"
#include "aircomp/random.hpp"
#include "aircomp/signal_model.hpp"
