#pragma once

#include "ficbl/error.hpp"
#include "ficbl/random.hpp"
#include "ficbl/parallel.hpp"
#include "ficbl/matrix.hpp"
#include "ficbl/format.hpp"
#include "ficbl/concept.hpp"
#include "ficbl/rules.hpp"
#include "ficbl/image.hpp"
#include "ficbl/dataset.hpp"
#include "ficbl/embedding.hpp"
#include "ficbl/clustering.hpp"
#include "ficbl/freq_model.hpp"
#include "ficbl/inference.hpp"
#include "ficbl/pipeline.hpp"
#include "ficbl/model_file.hpp"
#include "ficbl/evaluation.hpp"
