#include "sdrl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sdrl/errors.hpp"

namespace sdrl::harness {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;
    std::string context = "header";

    [[noreturn]] void fail(const std::string& msg) const {
        throw CheckpointError("checkpoint: " + msg + " (at record `" + context + "`)");
    }

    void need(std::size_t n) const {
        if (pos + n > data.size()) fail("truncated file");
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void write_checkpoint_file(const std::string& path,
                           const std::vector<CheckpointRecord>& records) {
    std::string out;
    out += "SDRL";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
        out += rec.name;
        out.push_back(rec.is_bytes ? 1 : 0);
        if (rec.is_bytes) {
            put_u64(out, rec.bytes.size());
            out += rec.bytes;
        } else {
            put_u32(out, static_cast<std::uint32_t>(rec.dims.size()));
            std::size_t count = 1;
            for (std::uint32_t d : rec.dims) {
                put_u32(out, d);
                count *= d;
            }
            if (count != rec.values.size())
                throw UsageError("checkpoint: record `" + rec.name + "` shape/value mismatch");
            for (double v : rec.values) put_f64(out, v);
        }
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw CheckpointError("checkpoint: cannot write " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw CheckpointError("checkpoint: short write to " + path);
}

std::vector<CheckpointRecord> read_checkpoint_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw CheckpointError("checkpoint: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader r{data};
    if (r.raw(4) != "SDRL") r.fail("bad magic, not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        r.fail("unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointRecord rec;
        const std::uint32_t name_len = r.u32();
        rec.name = r.raw(name_len);
        r.context = rec.name;
        r.need(1);
        rec.is_bytes = data[r.pos++] != 0;
        if (rec.is_bytes) {
            const std::uint64_t len = r.u64();
            rec.bytes = r.raw(len);
        } else {
            const std::uint32_t ndim = r.u32();
            std::size_t total = 1;
            for (std::uint32_t d = 0; d < ndim; ++d) {
                rec.dims.push_back(r.u32());
                total *= rec.dims.back();
            }
            rec.values.resize(total);
            for (std::size_t k = 0; k < total; ++k) rec.values[k] = r.f64();
        }
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

CheckpointRecord bytes_record(std::string name, std::string payload) {
    CheckpointRecord rec;
    rec.name = std::move(name);
    rec.is_bytes = true;
    rec.bytes = std::move(payload);
    return rec;
}

CheckpointRecord f64_record(std::string name, std::vector<double> values,
                            std::vector<std::uint32_t> dims = {}) {
    CheckpointRecord rec;
    rec.name = std::move(name);
    if (dims.empty()) dims = {static_cast<std::uint32_t>(values.size())};
    rec.dims = std::move(dims);
    rec.values = std::move(values);
    return rec;
}

const CheckpointRecord* find(const std::vector<CheckpointRecord>& records,
                             const std::string& name) {
    for (const auto& rec : records)
        if (rec.name == name) return &rec;
    return nullptr;
}

const CheckpointRecord& require(const std::vector<CheckpointRecord>& records,
                                const std::string& name) {
    const CheckpointRecord* rec = find(records, name);
    if (!rec) throw CheckpointError("checkpoint: missing record `" + name + "`");
    return *rec;
}

}  // namespace

void save_checkpoint(rl::Trainer& trainer, const std::string& path, bool include_buffer) {
    std::vector<CheckpointRecord> records;
    records.push_back(bytes_record("meta/algo", rl::algo_name(trainer.settings().algo)));
    records.push_back(bytes_record("meta/variant", rl::variant_name(trainer.settings().variant)));
    records.push_back(f64_record("meta/progress",
                                 {static_cast<double>(trainer.episodes_done()),
                                  static_cast<double>(trainer.total_steps())}));

    rl::Agent& agent = trainer.agent();
    for (const auto& arr : agent.named_arrays()) records.push_back(f64_record(arr.name, *arr.data));
    std::vector<double> adam_t;
    for (int g = 0; g < agent.adam_groups(); ++g)
        adam_t.push_back(static_cast<double>(agent.adam_step_count(g)));
    records.push_back(f64_record("adam/t", std::move(adam_t)));

    const auto streams = trainer.stream_state();
    records.push_back(bytes_record("rng/env", streams.env));
    records.push_back(bytes_record("rng/ou", streams.ou));
    records.push_back(bytes_record("rng/replay", streams.replay));
    records.push_back(bytes_record("rng/sd", streams.sd));
    records.push_back(bytes_record("rng/dropout", streams.dropout));

    if (include_buffer) {
        const rl::ReplayBuffer& buf = trainer.buffer();
        const std::uint32_t n = static_cast<std::uint32_t>(buf.size());
        const std::uint32_t dim =
            n > 0 ? static_cast<std::uint32_t>(buf.at(0).s.size()) : 0;
        std::vector<double> s, s2, a, r, done;
        s.reserve(static_cast<std::size_t>(n) * dim);
        s2.reserve(static_cast<std::size_t>(n) * dim);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = buf.at(i);
            s.insert(s.end(), t.s.begin(), t.s.end());
            s2.insert(s2.end(), t.s2.begin(), t.s2.end());
            a.push_back(t.a[0]);
            a.push_back(t.a[1]);
            r.push_back(t.r);
            done.push_back(t.done ? 1.0 : 0.0);
        }
        records.push_back(f64_record("buffer/s", std::move(s), {n, dim}));
        records.push_back(f64_record("buffer/s2", std::move(s2), {n, dim}));
        records.push_back(f64_record("buffer/a", std::move(a), {n, 2}));
        records.push_back(f64_record("buffer/r", std::move(r), {n}));
        records.push_back(f64_record("buffer/done", std::move(done), {n}));
        records.push_back(
            f64_record("buffer/next", {static_cast<double>(trainer.buffer().write_pos())}));
    }
    write_checkpoint_file(path, records);
}

CheckpointMeta load_checkpoint(rl::Trainer& trainer, const std::string& path) {
    const auto records = read_checkpoint_file(path);
    CheckpointMeta meta;
    meta.algo = require(records, "meta/algo").bytes;
    meta.variant = require(records, "meta/variant").bytes;
    if (meta.algo != rl::algo_name(trainer.settings().algo))
        throw CheckpointError("checkpoint: algorithm `" + meta.algo +
                              "` does not match the configured `" +
                              rl::algo_name(trainer.settings().algo) + "`");
    if (meta.variant != rl::variant_name(trainer.settings().variant))
        throw CheckpointError("checkpoint: variant `" + meta.variant +
                              "` does not match the configured `" +
                              rl::variant_name(trainer.settings().variant) + "`");

    rl::Agent& agent = trainer.agent();
    for (auto& arr : agent.named_arrays()) {
        const CheckpointRecord& rec = require(records, arr.name);
        if (rec.values.size() != arr.data->size())
            throw CheckpointError("checkpoint: record `" + arr.name + "` holds " +
                                  std::to_string(rec.values.size()) + " values but the variant's"
                                  " architecture wants " + std::to_string(arr.data->size()));
        *arr.data = rec.values;
    }
    const auto& adam_t = require(records, "adam/t").values;
    if (adam_t.size() != static_cast<std::size_t>(agent.adam_groups()))
        throw CheckpointError("checkpoint: record `adam/t` group count mismatch");
    for (int g = 0; g < agent.adam_groups(); ++g)
        agent.adam_step_count(g) = static_cast<long>(adam_t[g]);

    rl::Trainer::StreamState streams;
    streams.env = require(records, "rng/env").bytes;
    streams.ou = require(records, "rng/ou").bytes;
    streams.replay = require(records, "rng/replay").bytes;
    streams.sd = require(records, "rng/sd").bytes;
    streams.dropout = require(records, "rng/dropout").bytes;
    trainer.restore_stream_state(streams);

    const auto& progress = require(records, "meta/progress").values;
    if (progress.size() != 2) throw CheckpointError("checkpoint: record `meta/progress` malformed");
    meta.episodes_done = static_cast<int>(progress[0]);
    meta.total_steps = static_cast<long>(progress[1]);
    trainer.restore_progress(meta.episodes_done, meta.total_steps);

    if (const CheckpointRecord* s = find(records, "buffer/s")) {
        meta.has_buffer = true;
        const auto& s2 = require(records, "buffer/s2");
        const auto& a = require(records, "buffer/a");
        const auto& r = require(records, "buffer/r");
        const auto& done = require(records, "buffer/done");
        const auto& next = require(records, "buffer/next");
        if (s->dims.size() != 2) throw CheckpointError("checkpoint: record `buffer/s` malformed");
        const std::size_t n = s->dims[0];
        const std::size_t dim = s->dims[1];
        if (dim != static_cast<std::size_t>(agent.obs_dim()))
            throw CheckpointError("checkpoint: record `buffer/s` observation width " +
                                  std::to_string(dim) + " does not match the architecture");
        std::vector<rl::Transition> data(n);
        for (std::size_t i = 0; i < n; ++i) {
            data[i].s.assign(s->values.begin() + i * dim, s->values.begin() + (i + 1) * dim);
            data[i].s2.assign(s2.values.begin() + i * dim, s2.values.begin() + (i + 1) * dim);
            data[i].a = {a.values[2 * i], a.values[2 * i + 1]};
            data[i].r = r.values[i];
            data[i].done = done.values[i] != 0.0;
        }
        trainer.buffer().restore(std::move(data), static_cast<std::size_t>(next.values[0]));
    }
    return meta;
}

CheckpointMeta peek_checkpoint_meta(const std::string& path) {
    const auto records = read_checkpoint_file(path);
    CheckpointMeta meta;
    meta.algo = require(records, "meta/algo").bytes;
    meta.variant = require(records, "meta/variant").bytes;
    const auto& progress = require(records, "meta/progress").values;
    if (progress.size() == 2) {
        meta.episodes_done = static_cast<int>(progress[0]);
        meta.total_steps = static_cast<long>(progress[1]);
    }
    meta.has_buffer = find(records, "buffer/s") != nullptr;
    return meta;
}

}  // namespace sdrl::harness
