#pragma once

#include "sbamdt/core.hpp"
#include "sbamdt/spectral_graph.hpp"
#include "sbamdt/decision_tree.hpp"
#include "sbamdt/priors.hpp"
#include "sbamdt/likelihood.hpp"
#include "sbamdt/sampler.hpp"
#include "sbamdt/model.hpp"
#include "sbamdt/gp_diag.hpp"
#include "sbamdt/synthdata.hpp"
#include "sbamdt/metrics.hpp"
#include "sbamdt/io.hpp"
