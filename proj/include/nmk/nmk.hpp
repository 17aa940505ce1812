#pragma once

#include "nmk/core.hpp"
#include "nmk/rng.hpp"
#include "nmk/binio.hpp"
#include "nmk/ingest.hpp"
#include "nmk/synth.hpp"
#include "nmk/wavelet.hpp"
#include "nmk/filter.hpp"
#include "nmk/preprocess.hpp"
#include "nmk/features.hpp"
#include "nmk/augment.hpp"
#include "nmk/classify.hpp"
#include "nmk/deepnet.hpp"
#include "nmk/parallel.hpp"
#include "nmk/eval.hpp"
#include "nmk/report.hpp"
