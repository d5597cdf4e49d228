#include "fesr/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace fesr {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kStepStream = 0x57e9000000000000ULL;

torch::Tensor make_codes(const std::vector<int>& labels, int k, Rng& rng) {
    auto sampler = IntensitySampler::random(rng());
    std::vector<float> flat;
    flat.reserve(labels.size() * static_cast<std::size_t>(k));
    for (int y : labels) {
        const auto u = sample_intensity(one_hot(y, k), sampler);
        flat.insert(flat.end(), u.u.begin(), u.u.end());
    }
    return torch::tensor(flat).view({static_cast<std::int64_t>(labels.size()), k});
}

torch::Tensor make_prior(std::size_t b, int n, Rng& rng) {
    std::vector<float> flat;
    flat.reserve(b * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < b; ++i) {
        const auto z = sample_prior(n, rng);
        flat.insert(flat.end(), z.g.begin(), z.g.end());
    }
    return torch::tensor(flat).view({static_cast<std::int64_t>(b), n});
}

torch::Tensor index_tensor(const std::vector<std::size_t>& idx) {
    std::vector<std::int64_t> v(idx.begin(), idx.end());
    return torch::tensor(v, torch::kLong);
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
    std::vector<torch::Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(p.detach().clone());
    }
    return out;
}

bool same(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!torch::equal(a[i], b[i].detach())) {
            return false;
        }
    }
    return true;
}

bool needs_embedder(const VariantSpec& spec) { return spec.train_generator; }

}  // namespace

// ---------------------------------------------------------------- networks / optimizers

Networks::Networks(const ExperimentConfig& cfg) {
    torch::manual_seed(cfg.seed);
    enc = Encoder(cfg);
    dec = Decoder(cfg);
    dimg = ImageDiscriminator(cfg);
    dz = LatentDiscriminator(cfg);
    rec = Recognizer(cfg);
}

std::vector<torch::Tensor> Networks::generator_parameters() const {
    auto p = enc->parameters();
    auto d = dec->parameters();
    p.insert(p.end(), d.begin(), d.end());
    return p;
}

void Networks::train(bool on) {
    enc->train(on);
    dec->train(on);
    dimg->train(on);
    dz->train(on);
    rec->train(on);
}

torch::optim::AdamOptions adam_options(const ExperimentConfig& cfg) {
    return torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.beta1, cfg.beta2}).eps(1e-8);
}

OptimizerSet make_optimizers(const ExperimentConfig& cfg, Networks& nets) {
    OptimizerSet o;
    o.g = std::make_unique<torch::optim::Adam>(nets.generator_parameters(), adam_options(cfg));
    o.dimg = std::make_unique<torch::optim::Adam>(nets.dimg->parameters(), adam_options(cfg));
    o.dz = std::make_unique<torch::optim::Adam>(nets.dz->parameters(), adam_options(cfg));
    o.r = std::make_unique<torch::optim::Adam>(nets.rec->trainable_parameters(), adam_options(cfg));
    return o;
}

TensorDataset::TensorDataset(const DatasetManifest& m, const std::vector<Image>& imgs) : manifest(&m) {
    if (imgs.size() != m.entries.size()) {
        throw DataError("image count does not match the manifest");
    }
    images = to_tensor(imgs);
    std::vector<std::int64_t> y;
    y.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        y.push_back(e.class_index);
    }
    labels = torch::tensor(y, torch::kLong);
}

// ---------------------------------------------------------------- schedule

std::int64_t total_iterations(const ExperimentConfig& cfg) {
    const auto spec = variant_spec(cfg.variant).value();
    return spec.sequential ? 2 * cfg.p_max - cfg.p_pre : cfg.p_max;
}

std::int64_t recognizer_start(const ExperimentConfig& cfg) {
    const auto spec = variant_spec(cfg.variant).value();
    if (spec.sequential) {
        return cfg.p_max;
    }
    return spec.pretrain_stage ? cfg.p_pre : 0;
}

Stage stage_at(const ExperimentConfig& cfg, std::int64_t t) {
    const auto spec = variant_spec(cfg.variant).value();
    if (t < recognizer_start(cfg)) {
        return Stage::pretrain;
    }
    return spec.sequential ? Stage::separate : Stage::joint;
}

// ---------------------------------------------------------------- trainer

struct Trainer::Codes {
    std::vector<int> labels;
    std::vector<int> targets;
    torch::Tensor y;
    torch::Tensor y_target;
    torch::Tensor u_y;       // reconstruction code
    torch::Tensor u_target;  // relabel code
    torch::Tensor z;         // prior samples for D_z
};

Trainer::Trainer(const ExperimentConfig& cfg, const TensorDataset& data, std::vector<std::size_t> train_entries)
    : cfg_(cfg),
      spec_([&] {
          if (auto errors = validate_config(cfg); !errors.empty()) {
              std::string msg = "invalid config:";
              for (const auto& e : errors) {
                  msg += "\n  " + e;
              }
              throw ConfigError(msg);
          }
          return variant_spec(cfg.variant).value();
      }()),
      data_(&data),
      train_entries_(std::move(train_entries)),
      schedule_(*data.manifest, train_entries_, cfg.batch_size, cfg.seed, cfg.same_subject_pairs),
      nets_(cfg),
      opts_(make_optimizers(cfg, nets_)) {
    if (train_entries_.empty()) {
        throw DataError("empty training fold");
    }
    if (schedule_.batches_per_epoch() == 0) {
        throw DataError("training fold smaller than one batch");
    }
    if (data.manifest->class_count != cfg.num_classes || data.manifest->image_size != cfg.image_size ||
        data.manifest->channels != cfg.channels) {
        throw ConfigError("manifest (K, size, channels) does not match the config");
    }
}

void Trainer::set_embedder(std::shared_ptr<IdentityEmbedder> external) {
    if (external) {
        nets_.embedder = std::move(external);
        return;
    }
    std::map<std::string, std::int64_t> ids;
    std::vector<std::int64_t> subject;
    for (auto i : train_entries_) {
        const auto& s = data_->manifest->entries[i].subject_id;
        subject.push_back(ids.emplace(s, static_cast<std::int64_t>(ids.size())).first->second);
    }
    torch::manual_seed(splitmix(cfg_.seed ^ 0x1de0));
    auto toy = std::make_shared<ToyIdentityEmbedder>(cfg_, static_cast<int>(ids.size()));
    toy->pretrain(data_->images.index_select(0, index_tensor(train_entries_)), torch::tensor(subject, torch::kLong),
                  cfg_.embedder_steps, cfg_.seed);
    nets_.embedder = toy;
}

void Trainer::apply(torch::optim::Adam& opt, const torch::Tensor& loss, const std::vector<torch::Tensor>& params) {
    auto grads = torch::autograd::grad({loss}, params, {}, /*retain_graph=*/true, /*create_graph=*/false,
                                       /*allow_unused=*/true);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].mutable_grad() = grads[i];
    }
    opt.step();
    for (const auto& p : params) {
        p.mutable_grad() = torch::Tensor();
    }
}

void Trainer::guarded(const std::string& name, const std::function<void()>& update) {
    if (!isolation_check_) {
        update();
        return;
    }
    std::vector<std::pair<std::string, std::vector<torch::Tensor>>> groups{
        {"G", nets_.generator_parameters()},
        {"D_img", nets_.dimg->parameters()},
        {"D_z", nets_.dz->parameters()},
        {"R", nets_.rec->parameters()},
    };
    if (nets_.embedder) {
        groups.push_back({"F_id", nets_.embedder->parameters()});
    }
    std::vector<std::vector<torch::Tensor>> before;
    for (const auto& g : groups) {
        before.push_back(snapshot(g.second));
    }
    update();
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i].first != name && !same(before[i], groups[i].second)) {
            violations_.push_back("t=" + std::to_string(t_) + ": " + name + " update changed " + groups[i].first);
        }
        for (const auto& p : groups[i].second) {
            if (p.grad().defined() && p.grad().abs().sum().item<double>() != 0.0) {
                violations_.push_back("t=" + std::to_string(t_) + ": " + groups[i].first +
                                      " holds a gradient after the " + name + " update");
            }
        }
    }
}

Trainer::Codes Trainer::draw_codes(const Batch& batch, Rng& rng) const {
    Codes c;
    c.labels = batch.labels;
    for (int y : batch.labels) {
        c.targets.push_back(sample_target_label(one_hot(y, cfg_.num_classes), cfg_.num_classes, rng).class_index);
    }
    std::vector<std::int64_t> y(c.labels.begin(), c.labels.end());
    std::vector<std::int64_t> yt(c.targets.begin(), c.targets.end());
    c.y = torch::tensor(y, torch::kLong);
    c.y_target = torch::tensor(yt, torch::kLong);
    c.u_y = make_codes(c.labels, cfg_.num_classes, rng);
    c.u_target = make_codes(c.targets, cfg_.num_classes, rng);
    c.z = make_prior(c.labels.size(), cfg_.latent_dim, rng);
    return c;
}

torch::Tensor Trainer::synthesize_pf(const torch::Tensor& g, const torch::Tensor& labels, Rng& rng) {
    std::vector<int> y(labels.data_ptr<std::int64_t>(), labels.data_ptr<std::int64_t>() + labels.numel());
    if (spec_.prior_synthesis) {
        const auto z = make_prior(y.size(), cfg_.latent_dim, rng);
        return nets_.dec->forward(z, make_codes(y, cfg_.num_classes, rng));
    }
    // every class from every input face
    const int k = cfg_.num_classes;
    std::vector<int> all;
    for (std::size_t b = 0; b < y.size(); ++b) {
        for (int c = 0; c < k; ++c) {
            all.push_back(c);
        }
    }
    return nets_.dec->forward(g.repeat_interleave(k, 0), make_codes(all, k, rng));
}

LossReport Trainer::step() {
    const std::int64_t t = t_;
    const Stage stage = stage_at(cfg_, t);
    const bool gen_active = spec_.train_generator && stage != Stage::separate;
    const bool rec_active = spec_.train_recognizer && stage != Stage::pretrain;

    LossReport rep;
    rep.t = t;
    rep.stage = stage;
    if (!gen_active && !rec_active) {
        ++t_;
        return rep;
    }
    if (needs_embedder(spec_) && !nets_.embedder) {
        set_embedder(nullptr);
    }

    auto rng = make_rng(cfg_.seed, kStepStream + static_cast<std::uint64_t>(t));
    torch::manual_seed(splitmix(cfg_.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(t)));
    nets_.train(true);

    const Batch batch = schedule_.batch(t);
    const auto x = data_->images.index_select(0, index_tensor(batch.indices));
    const auto x_pr = data_->images.index_select(0, index_tensor(batch.pair_indices));
    const Codes c = draw_codes(batch, rng);

    std::map<std::string, torch::Tensor> terms;
    auto record = [&](const std::string& name, const torch::Tensor& v) {
        terms[name] = v;
        rep.terms[name] = v.item<double>();
        check_finite({{name, rep.terms[name]}}, t);
    };
    auto finish_total = [&](const char* name, const std::optional<torch::Tensor>& total, std::optional<double>& out) {
        if (total) {
            out = total->item<double>();
            check_finite({{name, *out}}, t);
        }
    };
    const auto& l = cfg_.lambdas;

    torch::Tensor g;
    torch::Tensor x_hat;
    if (gen_active) {
        g = nets_.enc->forward(x);
        x_hat = nets_.dec->forward(g, c.u_target);

        if (spec_.latent_discriminator) {
            guarded("D_z", [&] {
                record("adv_d_z", adv_d_z(nets_.dz->forward(c.z), nets_.dz->forward(g.detach())));
                const auto L = total_Dz(terms, l, stage, spec_);
                finish_total("L_Dz", L, rep.totals.L_Dz);
                apply(*opts_.dz, *L, nets_.dz->parameters());
            });
        }
        if (spec_.image_discriminator) {
            guarded("D_img", [&] {
                const auto fake = x_hat.detach();
                for (int s = 0; s < std::max(cfg_.critic_steps, 1); ++s) {
                    const auto real_out = nets_.dimg->forward(x, spec_.image_classifier);
                    record("adv_d_img", adv_d_img(real_out.adv, nets_.dimg->adversarial(fake)));
                    if (cfg_.gp_coeff > 0.0) {
                        auto critic = [&](const torch::Tensor& m) {
                            return nets_.dimg->adversarial(m).flatten(1).mean(1);
                        };
                        record("gp", gradient_penalty(critic, x, fake, cfg_.gp_coeff, rng));
                    }
                    if (spec_.image_classifier) {
                        record("cls_D_r", cls_ce(real_out.logits, c.y));
                    }
                    const auto L = total_Dimg(terms, l, stage, spec_);
                    finish_total("L_Dimg", L, rep.totals.L_Dimg);
                    apply(*opts_.dimg, *L, nets_.dimg->parameters());
                }
            });
        }

        // generator terms against the freshly updated discriminators
        if (spec_.image_discriminator) {
            const auto out = nets_.dimg->forward(x_hat, spec_.image_classifier);
            record("adv_g_img", adv_g_img(out.adv));
            if (spec_.image_classifier) {
                record("cls_D_f", cls_ce(out.logits, c.y_target));
            }
        }
        if (spec_.latent_discriminator) {
            record("adv_g_z", adv_g_z(nets_.dz->forward(g)));
        }
        if (spec_.content_losses) {
            const auto x_rec = nets_.dec->forward(g, c.u_y);
            record("rec", recon_l1(x, x_rec));
            if (spec_.identity_loss) {
                torch::Tensor f_x;
                {
                    torch::NoGradGuard ng;
                    f_x = nets_.embedder->embed(x);
                }
                auto id = identity_l1(f_x, nets_.embedder->embed(x_rec));
                if (cfg_.identity_loss_on_synthesis) {
                    id = 0.5 * (id + identity_l1(f_x, nets_.embedder->embed(x_hat)));
                }
                record("id", id);
            }
        }
    }

    if (rec_active) {
        torch::Tensor x_pf_all;  // synthetic recognizer inputs, labels y_pf
        torch::Tensor y_pf;
        torch::Tensor x_pf;      // one per anchor, same class as the anchor
        if (spec_.train_generator) {
            if (stage == Stage::separate) {
                torch::NoGradGuard ng;
                nets_.enc->eval();
                nets_.dec->eval();
                const auto gs = spec_.prior_synthesis ? torch::Tensor() : nets_.enc->forward(x);
                x_pf_all = synthesize_pf(gs, c.y, rng);
            } else {
                x_pf_all = synthesize_pf(g, c.y, rng);
            }
            if (spec_.prior_synthesis) {
                y_pf = c.y;
                x_pf = x_pf_all;
            } else {
                const auto b = static_cast<std::int64_t>(c.labels.size());
                const int k = cfg_.num_classes;
                y_pf = torch::arange(k, torch::kLong).repeat({b});
                std::vector<std::int64_t> pick;
                for (std::int64_t i = 0; i < b; ++i) {
                    pick.push_back(((i + 1) % b) * k + c.labels[static_cast<std::size_t>(i)]);
                }
                x_pf = x_pf_all.index_select(0, torch::tensor(pick, torch::kLong));
            }
        }

        guarded("R", [&] {
            const auto f_x = nets_.rec->extract(x);
            record("cls_R_r", cls_ce(nets_.rec->classify(f_x), c.y));
            if (x_pf_all.defined()) {
                const auto pf_all = x_pf_all.detach();
                const auto f_all = nets_.rec->extract(pf_all);
                record("cls_R_f", cls_ce(nets_.rec->classify(f_all), y_pf));
                if (spec_.intra_loss) {
                    const auto f_pf = spec_.prior_synthesis ? f_all : nets_.rec->extract(x_pf.detach());
                    const auto f_pr = nets_.rec->extract(x_pr);
                    const auto terms_intra = intra_class_loss(
                        f_x, f_pr, f_pf, spec_.rdbp ? GradientRule::rdbp : GradientRule::full);
                    record("intra", terms_intra.total);
                }
            }
            const auto L = total_R(terms, l, stage, spec_);
            finish_total("L_R", L, rep.totals.L_R);
            apply(*opts_.r, *L, nets_.rec->trainable_parameters());
        });

        if (gen_active && spec_.joint_feedback) {
            record("cls_R_f_G", cls_ce(nets_.rec->forward(x_pf_all).logits, y_pf));
        }
    }

    if (gen_active) {
        guarded("G", [&] {
            const auto L = total_G(terms, l, stage, spec_);
            finish_total("L_G", L, rep.totals.L_G);
            if (L) {
                apply(*opts_.g, *L, nets_.generator_parameters());
            }
        });
    }

    ++t_;
    return rep;
}

// ---------------------------------------------------------------- checkpoints

namespace {

void write_string(torch::serialize::OutputArchive& ar, const std::string& key, const std::string& value) {
    ar.write(key, c10::IValue(value));
}

std::string read_string(torch::serialize::InputArchive& ar, const std::string& key) {
    c10::IValue v;
    ar.read(key, v);
    return v.toStringRef();
}

std::int64_t read_int(torch::serialize::InputArchive& ar, const std::string& key) {
    torch::Tensor v;
    ar.read(key, v);
    return v.item<std::int64_t>();
}

template <class M>
void save_module(torch::serialize::OutputArchive& ar, const std::string& key, const M& module) {
    torch::serialize::OutputArchive sub;
    module->save(sub);
    ar.write(key, sub);
}

template <class M>
void load_module(torch::serialize::InputArchive& ar, const std::string& key, M& module) {
    torch::serialize::InputArchive sub;
    ar.read(key, sub);
    module->load(sub);
}

// Optimizer state by parameter position rather than by tensor address, so equal states write
// equal bytes.
void save_optimizer(torch::serialize::OutputArchive& ar, const std::string& key, const torch::optim::Adam& opt) {
    torch::serialize::OutputArchive sub;
    const auto& group = opt.param_groups().at(0);
    const auto& o = static_cast<const torch::optim::AdamOptions&>(group.options());
    sub.write("hyper", torch::tensor({o.lr(), std::get<0>(o.betas()), std::get<1>(o.betas()), o.eps(),
                                      o.weight_decay()},
                                     torch::kFloat64));
    const auto& params = group.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto it = opt.state().find(params[i].unsafeGetTensorImpl());
        if (it == opt.state().end()) {
            continue;
        }
        const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const auto name = "p" + std::to_string(i);
        sub.write(name + "_step", torch::tensor(st.step()));
        sub.write(name + "_m", st.exp_avg());
        sub.write(name + "_v", st.exp_avg_sq());
    }
    ar.write(key, sub);
}

void load_optimizer(torch::serialize::InputArchive& ar, const std::string& key, torch::optim::Adam& opt) {
    torch::serialize::InputArchive sub;
    ar.read(key, sub);
    auto& group = opt.param_groups().at(0);
    auto& o = static_cast<torch::optim::AdamOptions&>(group.options());
    torch::Tensor hyper;
    sub.read("hyper", hyper);
    const auto h = hyper.accessor<double, 1>();
    o.lr(h[0]).betas({h[1], h[2]}).eps(h[3]).weight_decay(h[4]);
    opt.state().clear();
    const auto& params = group.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto name = "p" + std::to_string(i);
        torch::Tensor step;
        if (!sub.try_read(name + "_step", step)) {
            continue;
        }
        auto st = std::make_unique<torch::optim::AdamParamState>();
        st->step(step.item<std::int64_t>());
        torch::Tensor m, v;
        sub.read(name + "_m", m);
        sub.read(name + "_v", v);
        st->exp_avg(m);
        st->exp_avg_sq(v);
        opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
    }
}

void save_networks(torch::serialize::OutputArchive& ar, const Networks& nets) {
    save_module(ar, "G_enc", nets.enc);
    save_module(ar, "G_dec", nets.dec);
    save_module(ar, "D_img", nets.dimg);
    save_module(ar, "D_z", nets.dz);
    save_module(ar, "R", nets.rec);
    if (auto toy = std::dynamic_pointer_cast<ToyIdentityEmbedder>(nets.embedder)) {
        save_module(ar, "F_id", toy->net());
        ar.write("F_id_classes", torch::tensor(static_cast<std::int64_t>(toy->identity_classes())));
    }
}

void load_networks(torch::serialize::InputArchive& ar, Networks& nets, const ExperimentConfig& cfg) {
    load_module(ar, "G_enc", nets.enc);
    load_module(ar, "G_dec", nets.dec);
    load_module(ar, "D_img", nets.dimg);
    load_module(ar, "D_z", nets.dz);
    load_module(ar, "R", nets.rec);
    torch::Tensor classes;
    if (ar.try_read("F_id_classes", classes)) {
        auto toy = std::make_shared<ToyIdentityEmbedder>(cfg, static_cast<int>(classes.item<std::int64_t>()));
        load_module(ar, "F_id", toy->net());
        toy->freeze();
        nets.embedder = toy;
    }
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
    torch::serialize::OutputArchive ar;
    ar.write("t", torch::tensor(t_));
    write_string(ar, "config", cfg_.serialize());
    write_string(ar, "config_hash", cfg_.hash());
    save_networks(ar, nets_);
    save_optimizer(ar, "opt_G", *opts_.g);
    save_optimizer(ar, "opt_D_img", *opts_.dimg);
    save_optimizer(ar, "opt_D_z", *opts_.dz);
    save_optimizer(ar, "opt_R", *opts_.r);
    const auto tmp = fs::path(path.string() + ".tmp");
    ar.save_to(tmp.string());
    fs::rename(tmp, path);
}

void Trainer::load_checkpoint(const fs::path& path) {
    torch::serialize::InputArchive ar;
    try {
        ar.load_from(path.string());
    } catch (const c10::Error& e) {
        throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    const auto hash = read_string(ar, "config_hash");
    if (hash != cfg_.hash()) {
        throw ConfigError("checkpoint " + path.string() + " was written with config hash " + hash +
                          ", current config hashes to " + cfg_.hash());
    }
    t_ = read_int(ar, "t");
    load_networks(ar, nets_, cfg_);
    load_optimizer(ar, "opt_G", *opts_.g);
    load_optimizer(ar, "opt_D_img", *opts_.dimg);
    load_optimizer(ar, "opt_D_z", *opts_.dz);
    load_optimizer(ar, "opt_R", *opts_.r);
}

LoadedModel load_model(const fs::path& checkpoint) {
    torch::serialize::InputArchive ar;
    try {
        ar.load_from(checkpoint.string());
    } catch (const c10::Error& e) {
        throw DataError("cannot read checkpoint " + checkpoint.string() + ": " + e.what_without_backtrace());
    }
    LoadedModel m;
    m.cfg = ExperimentConfig::parse(read_string(ar, "config"));
    if (m.cfg.hash() != read_string(ar, "config_hash")) {
        throw ConfigError("checkpoint " + checkpoint.string() + " has an inconsistent config hash");
    }
    m.t = read_int(ar, "t");
    m.nets = std::make_unique<Networks>(m.cfg);
    load_networks(ar, *m.nets, m.cfg);
    m.nets->train(false);
    return m;
}

fs::path checkpoint_path(const fs::path& dir, std::int64_t t) {
    std::ostringstream os;
    os << "ckpt_" << std::setw(8) << std::setfill('0') << t << ".pt";
    return dir / os.str();
}

std::vector<fs::path> list_checkpoints(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) {
        return out;
    }
    static const std::regex pattern(R"(ckpt_\d{8}\.pt)");
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && std::regex_match(e.path().filename().string(), pattern)) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
    auto all = list_checkpoints(dir);
    if (all.empty()) {
        return std::nullopt;
    }
    return all.back();
}

// ---------------------------------------------------------------- run

RunResult run(const ExperimentConfig& cfg, const TensorDataset& data, const std::vector<std::size_t>& train_entries,
              const RunOptions& options, std::unique_ptr<Trainer>* keep) {
    fs::create_directories(options.out_dir);
    auto trainer = std::make_unique<Trainer>(cfg, data, train_entries);
    trainer->set_isolation_check(options.isolation_check);

    const auto metrics_path = options.out_dir / "metrics.csv";
    std::vector<std::string> kept_rows;
    if (options.resume) {
        if (auto last = latest_checkpoint(options.out_dir)) {
            trainer->load_checkpoint(*last);
            log_info("resumed from " + last->string());
            std::ifstream in(metrics_path);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                if (!line.empty() && std::stoll(line.substr(0, line.find(','))) < trainer->t()) {
                    kept_rows.push_back(line);
                }
            }
        }
    } else {
        for (const auto& p : list_checkpoints(options.out_dir)) {
            fs::remove(p);
        }
    }
    save_config(cfg, options.out_dir / "config.cfg");

    std::ofstream metrics(metrics_path, std::ios::trunc);
    metrics << LossReport::csv_header() << '\n';
    for (const auto& r : kept_rows) {
        metrics << r << '\n';
    }

    const auto total = total_iterations(cfg);
    const auto every = std::max<std::int64_t>(cfg.checkpoint_every, 1);
    RunResult result;
    while (trainer->t() < total && (!options.stop_at || trainer->t() < *options.stop_at)) {
        const auto rep = trainer->step();
        metrics << rep.csv_row() << '\n';
        if (options.on_step) {
            options.on_step(rep);
        }
        const auto t = trainer->t();
        if (t % every == 0 || t == total) {
            metrics.flush();
            const auto path = checkpoint_path(options.out_dir, t);
            trainer->save_checkpoint(path);
            result.final_checkpoint = path;
            if (options.on_checkpoint) {
                options.on_checkpoint(*trainer, t);
            }
        }
    }
    metrics.flush();
    result.iterations = trainer->t();
    result.metrics_csv = metrics_path;
    if (result.final_checkpoint.empty()) {
        if (auto last = latest_checkpoint(options.out_dir)) {
            result.final_checkpoint = *last;
        }
    }
    if (keep) {
        *keep = std::move(trainer);
    }
    return result;
}

}  // namespace fesr
