#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mqt/model.hpp"

namespace mqt {

struct FlopQuery {
    std::string scheme;  // none | global_context | local_context | cross_task_attention
    std::int64_t h = 64;
    std::int64_t w = 64;
    std::int64_t c = 256;
    std::int64_t n = 100;
    std::int64_t k = 9;
    std::int64_t tn = 2;
    std::int64_t s = 2;
};

struct FlopItem {
    std::string label;
    double flops = 0.0;
};

struct FlopReport {
    std::vector<FlopItem> items;
    std::string note;

    double total() const;
    double gflops() const { return total() / 1e9; }
};

// Counting convention shared by every report (recorded in the note): one
// multiply-accumulate is one FLOP for matrix/conv products, softmax costs 5
// ops per element, residual additions and normalizations are not counted.
extern const char* const kFlopConvention;

FlopReport flops_none();
FlopReport flops_local_context(const FlopQuery& q);   // HW * C^2 * K^2
FlopReport flops_global_context(const FlopQuery& q);  // projections + (HW)^2 attention
// Cross-task grouping attention over S groups of TN*N queries each;
// independent of H and W by construction.
FlopReport flops_cross_task(const FlopQuery& q);

FlopReport dispatch_flops(const FlopQuery& q);  // by scheme name

FlopReport flops_model(const MQTConfig& config, const std::vector<TaskSpec>& tasks);

}  // namespace mqt
