#pragma once

#include "netable/core/checkpoint.hpp"
#include "netable/core/error.hpp"
#include "netable/core/gradcheck.hpp"
#include "netable/core/graph.hpp"
#include "netable/core/optimizer.hpp"
#include "netable/core/parameters.hpp"
#include "netable/core/random.hpp"
#include "netable/core/tensor.hpp"
#include "netable/db/db_table.hpp"
#include "netable/db/retrieval.hpp"
#include "netable/db/toy_oracle.hpp"
#include "netable/harness/config.hpp"
#include "netable/harness/experiment.hpp"
#include "netable/harness/io.hpp"
#include "netable/harness/report.hpp"
#include "netable/harness/selftest.hpp"
#include "netable/harness/train_loop.hpp"
#include "netable/memory/memory_network.hpp"
#include "netable/ne/ne_table.hpp"
#include "netable/nn/bow.hpp"
#include "netable/nn/embedding.hpp"
#include "netable/nn/lstm.hpp"
#include "netable/nn/mlp.hpp"
#include "netable/nn/rnn.hpp"
#include "netable/tasks/dialog_data.hpp"
#include "netable/tasks/dialog_model.hpp"
#include "netable/tasks/reading_data.hpp"
#include "netable/tasks/reading_model.hpp"
#include "netable/tasks/structured_qa.hpp"
#include "netable/text/token.hpp"
#include "netable/text/vocabulary.hpp"
