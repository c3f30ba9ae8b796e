#pragma once

#include "glstm/checkpoint.hpp"
#include "glstm/dataset.hpp"
#include "glstm/docgraph.hpp"
#include "glstm/errors.hpp"
#include "glstm/gradcheck.hpp"
#include "glstm/graph_lstm.hpp"
#include "glstm/io.hpp"
#include "glstm/lexicon.hpp"
#include "glstm/numeric.hpp"
#include "glstm/relation_model.hpp"
#include "glstm/train_eval.hpp"
