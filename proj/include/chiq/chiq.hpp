#pragma once

#include "chiq/analyzer.hpp"
#include "chiq/bm25.hpp"
#include "chiq/config.hpp"
#include "chiq/corpus.hpp"
#include "chiq/dense.hpp"
#include "chiq/enhance.hpp"
#include "chiq/error.hpp"
#include "chiq/fusion.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/metrics.hpp"
#include "chiq/prompts.hpp"
#include "chiq/ranked_list.hpp"
#include "chiq/retriever.hpp"
#include "chiq/rewrite.hpp"
#include "chiq/supervision.hpp"
