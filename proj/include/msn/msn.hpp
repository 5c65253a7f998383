#pragma once

#include "msn/core/config.hpp"
#include "msn/core/error.hpp"
#include "msn/core/rng.hpp"
#include "msn/eval/compare.hpp"
#include "msn/eval/frechet.hpp"
#include "msn/flow/dit.hpp"
#include "msn/flow/ot_cfm.hpp"
#include "msn/io/captions.hpp"
#include "msn/io/checkpoint.hpp"
#include "msn/io/hash.hpp"
#include "msn/io/latent_file.hpp"
#include "msn/io/metrics.hpp"
#include "msn/io/model_files.hpp"
#include "msn/io/pairs.hpp"
#include "msn/io/synthetic.hpp"
#include "msn/lm/generate.hpp"
#include "msn/lm/loss.hpp"
#include "msn/lm/model.hpp"
#include "msn/lm/sequence.hpp"
#include "msn/lm/train.hpp"
#include "msn/lm/vocab.hpp"
#include "msn/nn/adamw.hpp"
#include "msn/nn/layers.hpp"
#include "msn/nn/timestep.hpp"
#include "msn/nn/transformer.hpp"
#include "msn/tensor/grad_check.hpp"
#include "msn/tensor/grad_suite.hpp"
#include "msn/tensor/ops.hpp"
#include "msn/tensor/tensor.hpp"
#include "msn/tokenizer/config.hpp"
#include "msn/tokenizer/model.hpp"
#include "msn/tokenizer/train.hpp"
#include "msn/vq/codebook.hpp"
