#pragma once

#include "lexforge/corpus.hpp"
#include "lexforge/cpt_packer.hpp"
#include "lexforge/enhancement.hpp"
#include "lexforge/error.hpp"
#include "lexforge/filter.hpp"
#include "lexforge/hipo.hpp"
#include "lexforge/inference.hpp"
#include "lexforge/metrics.hpp"
#include "lexforge/mixer.hpp"
#include "lexforge/mock.hpp"
#include "lexforge/pipeline.hpp"
#include "lexforge/psft.hpp"
#include "lexforge/quality.hpp"
#include "lexforge/random.hpp"
#include "lexforge/reference_tables.hpp"
#include "lexforge/text.hpp"
