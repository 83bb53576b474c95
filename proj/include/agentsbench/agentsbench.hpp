#pragma once

#include "agentsbench/utf8.hpp"
#include "agentsbench/term_parser.hpp"
#include "agentsbench/dataset.hpp"
#include "agentsbench/llm_backend.hpp"
#include "agentsbench/types.hpp"
#include "agentsbench/prompts.hpp"
#include "agentsbench/bench_engine.hpp"
#include "agentsbench/evaluation.hpp"
#include "agentsbench/run.hpp"
