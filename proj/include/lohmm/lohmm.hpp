#pragma once

#include "lohmm/corpus.hpp"
#include "lohmm/errors.hpp"
#include "lohmm/ingest.hpp"
#include "lohmm/learn.hpp"
#include "lohmm/logic.hpp"
#include "lohmm/model.hpp"
#include "lohmm/model_io.hpp"
#include "lohmm/semantics.hpp"
#include "lohmm/structure.hpp"
