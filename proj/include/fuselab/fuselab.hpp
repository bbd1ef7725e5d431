#pragma once

// Umbrella header.

#include "fuselab/analysis/cross_validation.hpp"
#include "fuselab/analysis/metrics.hpp"
#include "fuselab/analysis/sobol_indices.hpp"
#include "fuselab/config.hpp"
#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/fusion.hpp"
#include "fuselab/gp/model.hpp"
#include "fuselab/gp/serialization.hpp"
#include "fuselab/hierarchy.hpp"
#include "fuselab/imaging/image.hpp"
#include "fuselab/imaging/io.hpp"
#include "fuselab/optimizer.hpp"
#include "fuselab/records.hpp"
#include "fuselab/sobol_sequence.hpp"
#include "fuselab/synthetic.hpp"
#include "fuselab/version.hpp"
