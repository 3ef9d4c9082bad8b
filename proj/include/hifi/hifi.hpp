#pragma once

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"
#include "hifi/metrics.hpp"
#include "hifi/pipeline.hpp"
#include "hifi/random.hpp"
#include "hifi/rankgraph.hpp"
#include "hifi/selector.hpp"
#include "hifi/spectral.hpp"
#include "hifi/stability.hpp"
#include "hifi/synthgen.hpp"
#include "hifi/tensor_store.hpp"
