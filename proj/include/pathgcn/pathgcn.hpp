#pragma once

#include "pathgcn/bundle.hpp"
#include "pathgcn/graph.hpp"
#include "pathgcn/io.hpp"
#include "pathgcn/matrix.hpp"
#include "pathgcn/model.hpp"
#include "pathgcn/nn.hpp"
#include "pathgcn/path_conv.hpp"
#include "pathgcn/path_sampler.hpp"
#include "pathgcn/random.hpp"
#include "pathgcn/verify.hpp"
