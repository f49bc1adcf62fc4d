// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header.

#pragma once

#include "kvunion/attention.hpp"
#include "kvunion/block_table.hpp"
#include "kvunion/block_union.hpp"
#include "kvunion/cost_ledger.hpp"
#include "kvunion/errors.hpp"
#include "kvunion/paged_kv_cache.hpp"
#include "kvunion/pattern_search.hpp"
#include "kvunion/prefill_engine.hpp"
#include "kvunion/sparse_exec.hpp"
#include "kvunion/tensor.hpp"
#include "kvunion/workload.hpp"
