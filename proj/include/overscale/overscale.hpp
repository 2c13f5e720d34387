#pragma once

#include "overscale/aggregation.hpp"
#include "overscale/canonical_json.hpp"
#include "overscale/categorical.hpp"
#include "overscale/errors.hpp"
#include "overscale/estimator.hpp"
#include "overscale/metrics.hpp"
#include "overscale/parallel.hpp"
#include "overscale/planted_benchmark.hpp"
#include "overscale/policies.hpp"
#include "overscale/reports.hpp"
#include "overscale/rng.hpp"
#include "overscale/taxonomy.hpp"
#include "overscale/trace.hpp"
#include "overscale/trace_io.hpp"
#include "overscale/vote.hpp"
