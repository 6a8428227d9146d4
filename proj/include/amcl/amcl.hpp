#pragma once

// Umbrella header.
#include "amcl/analysis.hpp"
#include "amcl/attributes.hpp"
#include "amcl/corpus.hpp"
#include "amcl/curriculum.hpp"
#include "amcl/embeddings.hpp"
#include "amcl/error.hpp"
#include "amcl/learner.hpp"
#include "amcl/metrics.hpp"
#include "amcl/rng.hpp"
#include "amcl/scheduler.hpp"
#include "amcl/synthetic.hpp"
#include "amcl/textio.hpp"
