#pragma once

#include <mvfluct/common.hpp>
#include <mvfluct/constants.hpp>
#include <mvfluct/experiments.hpp>
#include <mvfluct/io.hpp>
#include <mvfluct/malliavin.hpp>
#include <mvfluct/metrics.hpp>
#include <mvfluct/model.hpp>
#include <mvfluct/parallel.hpp>
#include <mvfluct/rng.hpp>
#include <mvfluct/simulate.hpp>
#include <mvfluct/variance.hpp>
