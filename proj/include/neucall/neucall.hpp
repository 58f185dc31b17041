#pragma once

// Umbrella header: everything from ingestion to the command-line front end.

#include "neucall/ablation.hpp"
#include "neucall/acfg.hpp"
#include "neucall/acfg_io.hpp"
#include "neucall/assembler.hpp"
#include "neucall/checkpoint.hpp"
#include "neucall/cfg.hpp"
#include "neucall/cli.hpp"
#include "neucall/dataset.hpp"
#include "neucall/decoder.hpp"
#include "neucall/elf.hpp"
#include "neucall/error.hpp"
#include "neucall/features.hpp"
#include "neucall/ir.hpp"
#include "neucall/ir_jsonl.hpp"
#include "neucall/metrics.hpp"
#include "neucall/model.hpp"
#include "neucall/pipeline.hpp"
#include "neucall/rng.hpp"
#include "neucall/spectral.hpp"
#include "neucall/symbolize.hpp"
#include "neucall/synthetic.hpp"
#include "neucall/train.hpp"
#include "neucall/vocab.hpp"
