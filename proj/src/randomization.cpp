#include "stratadj/randomization.hpp"

#include <numeric>

#include "stratadj/error.hpp"

namespace stratadj {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

Assignment sample_assignment(const ExperimentDesign& design, std::uint64_t seed) {
    Assignment out;
    out.z.reserve(design.strata().size());
    std::vector<int> order;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = design.stratum(i);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        order.resize(static_cast<std::size_t>(s.n));
        std::iota(order.begin(), order.end(), 0);
        std::vector<std::uint8_t> z(static_cast<std::size_t>(s.n), 0);
        // Partial Fisher-Yates: the first n1 slots are a uniform n1-subset.
        for (int k = 0; k < s.n1; ++k) {
            std::uniform_int_distribution<int> pick(k, s.n - 1);
            std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
            z[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
        }
        out.z.push_back(std::move(z));
    }
    return out;
}

namespace {

BigCount binomial(int n, int k) {
    BigCount r = 1;
    k = std::min(k, n - k);
    for (int j = 1; j <= k; ++j) {
        r *= (n - k + j);
        r /= j;
    }
    return r;
}

}  // namespace

BigCount count_assignments(const ExperimentDesign& design) {
    BigCount total = 1;
    for (const auto& s : design.strata()) total *= binomial(s.n, s.n1);
    return total;
}

AssignmentEnumerator::AssignmentEnumerator(const ExperimentDesign& design, std::uint64_t cap)
    : strata_(design.strata()) {
    const BigCount count = count_assignments(design);
    if (count > BigCount(cap)) {
        throw Error(ErrorKind::TooLarge, "design has " + count.str() + " assignments, cap is " +
                                             std::to_string(cap));
    }
    total_ = count.convert_to<std::uint64_t>();
    reset();
}

void AssignmentEnumerator::reset() {
    combos_.clear();
    for (const auto& s : strata_) {
        std::vector<int> c(static_cast<std::size_t>(s.n1));
        std::iota(c.begin(), c.end(), 0);
        combos_.push_back(std::move(c));
    }
    started_ = false;
    done_ = false;
}

bool AssignmentEnumerator::advance_stratum(std::size_t i) {
    auto& c = combos_[i];
    const int n = strata_[i].n;
    const int k = static_cast<int>(c.size());
    int pos = k - 1;
    while (pos >= 0 && c[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) {
        std::iota(c.begin(), c.end(), 0);
        return false;
    }
    ++c[static_cast<std::size_t>(pos)];
    for (int q = pos + 1; q < k; ++q) c[static_cast<std::size_t>(q)] = c[static_cast<std::size_t>(q - 1)] + 1;
    return true;
}

void AssignmentEnumerator::write(Assignment& out) const {
    out.z.resize(strata_.size());
    for (std::size_t i = 0; i < strata_.size(); ++i) {
        auto& z = out.z[i];
        z.assign(static_cast<std::size_t>(strata_[i].n), 0);
        for (int idx : combos_[i]) z[static_cast<std::size_t>(idx)] = 1;
    }
}

bool AssignmentEnumerator::next(Assignment& out) {
    if (done_) return false;
    if (!started_) {
        started_ = true;
        write(out);
        return true;
    }
    for (std::size_t i = strata_.size(); i-- > 0;) {
        if (advance_stratum(i)) {
            write(out);
            return true;
        }
    }
    done_ = true;
    return false;
}

std::vector<Assignment> enumerate_assignments(const ExperimentDesign& design, std::uint64_t cap) {
    AssignmentEnumerator e(design, cap);
    std::vector<Assignment> out;
    out.reserve(e.size());
    Assignment a;
    while (e.next(a)) out.push_back(a);
    return out;
}

}  // namespace stratadj
