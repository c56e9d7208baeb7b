#pragma once

#include "piunet/adam.hpp"
#include "piunet/baseline.hpp"
#include "piunet/blocks.hpp"
#include "piunet/conv.hpp"
#include "piunet/dataset.hpp"
#include "piunet/equivariant.hpp"
#include "piunet/evaluation.hpp"
#include "piunet/gradcheck.hpp"
#include "piunet/image.hpp"
#include "piunet/kvconfig.hpp"
#include "piunet/losses.hpp"
#include "piunet/metrics.hpp"
#include "piunet/model.hpp"
#include "piunet/ops.hpp"
#include "piunet/params.hpp"
#include "piunet/png_io.hpp"
#include "piunet/preprocess.hpp"
#include "piunet/sparsification.hpp"
#include "piunet/svg_plot.hpp"
#include "piunet/synthetic.hpp"
#include "piunet/tensor.hpp"
#include "piunet/trainer.hpp"
