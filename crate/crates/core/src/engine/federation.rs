use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{FederationConfig, Method};
use super::ledger::{global_accuracy, ClientMetric, CommLedger, LedgerEntry, RoundMetrics};
use crate::backbone::{
    accuracy_and_loss, decode_tensors, encode_tensors, predict, softmax_rows, train_epoch, Backbone, BackboneDims,
    ClientModel, LocalData, ProtoObjective,
};
use crate::error::{FedError, Result};
use crate::graph::{sparsify, Graph, Partition, PartitionMethod, Partitioner, Split};
use crate::linalg::Matrix;
use crate::proto::{
    add_prototype_noise, naive_local_prototypes, pseudo_annotate, AttentionScorer, Neighborhoods, PrototypeSet,
    PrototypeTape,
};
use crate::seed::derive_seed;
use crate::server::{
    adaptive_margin, build_query_sets, class_centers, match_upload_norms, naive_global_aggregate, personalized_fusion,
    train_gpg, GpgState,
};

/// One simulated client.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub data: LocalData,
    pub model: ClientModel,
    /// Last prototypes received from the server; reused while not sampled.
    pub targets: Option<PrototypeSet>,
}

/// Whole-simulation state, advanced one round at a time.
#[derive(Debug, Clone)]
pub struct Federation {
    pub cfg: FederationConfig,
    pub clients: Vec<ClientState>,
    pub gpg: Option<GpgState>,
    pub global_model: Option<Backbone>,
    pub num_classes: usize,
    pub ledger: CommLedger,
    pub history: Vec<RoundMetrics>,
    /// Encoded uploads of the latest round, in participant order.
    pub last_uploads: Vec<(usize, Vec<u8>)>,
    round: usize,
}

/// Support-weighted mean of same-shaped tensor lists, with weights
/// `n_k / Σ n`.
pub fn fedavg_aggregate(models: &[(Vec<Matrix>, usize)]) -> Result<Vec<Matrix>> {
    let first = &models
        .first()
        .ok_or_else(|| FedError::InvalidArgument("no models to aggregate".into()))?
        .0;
    let total: usize = models.iter().map(|m| m.1).sum();
    let weight = |n: usize| {
        if total == 0 {
            1.0 / models.len() as f64
        } else {
            n as f64 / total as f64
        }
    };
    for (tensors, _) in models {
        let same = tensors.len() == first.len() && tensors.iter().zip(first).all(|(a, b)| a.shape() == b.shape());
        if !same {
            return Err(FedError::ArchitectureMismatch(
                "clients uploaded differently shaped weights".into(),
            ));
        }
    }
    let mut out: Vec<Matrix> = first
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.scale(weight(models[0].1));
            t
        })
        .collect();
    for (tensors, n) in &models[1..] {
        for (acc, t) in out.iter_mut().zip(tensors) {
            acc.sub_scaled(t, -weight(*n));
        }
    }
    Ok(out)
}

impl Federation {
    /// Sparsifies and partitions `g` as configured, then initializes clients.
    pub fn from_graph(cfg: FederationConfig, g: &Graph) -> Result<Self> {
        cfg.validate()?;
        let g = match cfg.sparsity.mode() {
            Some(mode) => sparsify(g, mode, cfg.sparsity_keep, derive_seed(cfg.partition_seed, &[7]))?,
            None => g.clone(),
        };
        let partition = PartitionMethod::from(cfg.partition).partition(&g, cfg.num_clients, cfg.partition_seed)?;
        Self::new(cfg, &partition, g.num_classes())
    }

    pub fn new(cfg: FederationConfig, partition: &Partition, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        if partition.num_clients() != cfg.num_clients {
            return Err(FedError::InvalidArgument(format!(
                "partition has {} parts for {} clients",
                partition.num_clients(),
                cfg.num_clients
            )));
        }
        let mut clients = Vec::with_capacity(cfg.num_clients);
        for (id, part) in partition.clients.iter().enumerate() {
            let kind = cfg.backbone_for(id);
            let arch = if cfg.heterogeneous { (id % 3) as u64 } else { 0 };
            let dims = BackboneDims {
                input: part.graph.num_features(),
                hidden: cfg.hidden_dim,
                classes: num_classes,
                proto_dim: cfg.proto_dim,
            };
            let backbone = Backbone::new(
                kind,
                dims,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.init_seed, &[arch])),
            );
            let uniform = cfg.uniform_attention || cfg.method != Method::FedPg;
            let scorer = if uniform {
                AttentionScorer::uniform(cfg.proto_dim, cfg.scorer_hidden)
            } else {
                AttentionScorer::random(
                    cfg.proto_dim,
                    cfg.scorer_hidden,
                    &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.init_seed, &[100, arch])),
                )
            };
            let data = LocalData::new(part.graph.clone(), &backbone);
            clients.push(ClientState {
                id,
                data,
                model: ClientModel {
                    backbone,
                    scorer,
                    train_scorer: !uniform,
                    grad_clip: cfg.grad_clip,
                },
                targets: None,
            });
        }
        let gpg = (cfg.method == Method::FedPg && !cfg.gpg_bypass).then(|| {
            GpgState::new(
                num_classes,
                cfg.max_hop() + 1,
                cfg.proto_dim,
                derive_seed(cfg.init_seed, &[200]),
            )
        });
        let global_model = (cfg.method == Method::FedAvg).then(|| clients[0].model.backbone.clone());
        Ok(Federation {
            cfg,
            clients,
            gpg,
            global_model,
            num_classes,
            ledger: CommLedger::default(),
            history: Vec::new(),
            last_uploads: Vec::new(),
            round: 0,
        })
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// `ceil(ratio * N)` distinct client ids for round `t`, ascending.
    pub fn participants(&self, t: usize) -> Vec<usize> {
        let n = self.clients.len();
        let k = ((self.cfg.participation_ratio * n as f64).ceil() as usize).clamp(1, n);
        if k == n {
            return (0..n).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.sampling_seed, &[t as u64]));
        let mut ids = sample(&mut rng, n, k).into_vec();
        ids.sort_unstable();
        ids
    }

    /// Runs the next round and returns its metrics.
    pub fn run_round(&mut self) -> Result<&RoundMetrics> {
        let t = self.round + 1;
        let participants = self.participants(t);
        match self.cfg.method {
            Method::FedAvg => self.fedavg_round(t, &participants)?,
            Method::FedPg | Method::FedProtoNaive => self.prototype_round(t, &participants)?,
        }
        let clients = self.evaluate()?;
        let global_test_accuracy = global_accuracy(&clients);
        self.history.push(RoundMetrics {
            round: t,
            participants,
            clients,
            global_test_accuracy,
        });
        self.round = t;
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn run(&mut self) -> Result<()> {
        while self.round < self.cfg.rounds {
            self.run_round()?;
        }
        Ok(())
    }

    fn record_ledger(&mut self, t: usize, up: &[(usize, u64)], down: &[(usize, u64)], received: u64) {
        for c in 0..self.clients.len() {
            let find = |list: &[(usize, u64)]| list.iter().find(|e| e.0 == c).map_or(0, |e| e.1);
            self.ledger.entries.push(LedgerEntry {
                round: t,
                client_id: c,
                bytes_up: find(up),
                bytes_down: find(down),
            });
        }
        self.ledger.server_received.push(received);
        self.ledger.server_sent.push(down.iter().map(|e| e.1).sum());
    }

    fn prototype_round(&mut self, t: usize, participants: &[usize]) -> Result<()> {
        let cfg = &self.cfg;
        let max_hop = cfg.max_hop();
        let uploads: Vec<Result<(usize, Vec<u8>)>> = self
            .clients
            .par_iter_mut()
            .filter(|c| participants.contains(&c.id))
            .map(|c| {
                let id = c.id;
                client_prototype_step(c, cfg, t, max_hop)
                    .map(|b| (id, b))
                    .map_err(|e| e.in_context(&format!("round {t}, client {id}")))
            })
            .collect();
        let uploads: Vec<(usize, Vec<u8>)> = uploads.into_iter().collect::<Result<_>>()?;

        // Server side: everything below sees only the encoded bytes.
        let received: u64 = uploads.iter().map(|u| u.1.len() as u64).sum();
        let decoded: Vec<PrototypeSet> = uploads
            .iter()
            .map(|(_, b)| PrototypeSet::decode(b, self.cfg.proto_dim))
            .collect::<Result<_>>()?;
        let refs: Vec<&PrototypeSet> = decoded.iter().collect();
        let broadcasts: Vec<PrototypeSet> = match self.cfg.method {
            Method::FedProtoNaive => {
                let global = naive_global_aggregate(refs.iter().copied());
                vec![global; refs.len()]
            }
            _ => {
                let hops = max_hop + 1;
                let universal = match &mut self.gpg {
                    Some(gpg) => {
                        let margin = adaptive_margin(&class_centers(&refs), self.cfg.epsilon)
                            .map_err(|e| e.in_context(&format!("round {t}, server")))?;
                        let batches = build_query_sets(
                            &refs,
                            self.num_classes,
                            hops,
                            self.cfg.delta_s,
                            margin,
                            derive_seed(self.cfg.sampling_seed, &[t as u64, 1]),
                        );
                        train_gpg(gpg, &batches, self.cfg.server_epochs, self.cfg.server_lr)
                            .map_err(|e| e.in_context(&format!("round {t}, server")))?;
                        if self.cfg.match_norms {
                            match_upload_norms(&gpg.universal(), &refs)
                        } else {
                            gpg.universal()
                        }
                    }
                    None => naive_global_aggregate(refs.iter().copied()),
                };
                personalized_fusion(
                    &universal,
                    &refs,
                    self.cfg.lambda,
                    self.cfg.alpha,
                    self.num_classes,
                    hops,
                )
            }
        };

        let mut up = Vec::new();
        let mut down = Vec::new();
        for ((id, bytes), set) in uploads.iter().zip(&broadcasts) {
            let wire = set.encode();
            up.push((*id, bytes.len() as u64));
            down.push((*id, wire.len() as u64));
            self.clients[*id].targets = Some(PrototypeSet::decode(&wire, self.cfg.proto_dim)?);
        }
        self.record_ledger(t, &up, &down, received);
        self.last_uploads = uploads;
        Ok(())
    }

    fn fedavg_round(&mut self, t: usize, participants: &[usize]) -> Result<()> {
        let cfg = &self.cfg;
        let trained: Vec<Result<(usize, Vec<u8>, usize)>> = self
            .clients
            .par_iter_mut()
            .filter(|c| participants.contains(&c.id))
            .map(|c| {
                let id = c.id;
                let mut run = || -> Result<(usize, Vec<u8>, usize)> {
                    if !c.data.train_nodes().is_empty() {
                        for _ in 0..cfg.local_epochs {
                            train_epoch(&mut c.model, &c.data, None, cfg.lr, 0.0)?;
                        }
                    }
                    let blob = encode_tensors(&c.model.backbone.shared_tensors());
                    Ok((id, blob, c.data.train_nodes().len()))
                };
                run().map_err(|e| e.in_context(&format!("round {t}, client {id}")))
            })
            .collect();
        let trained: Vec<(usize, Vec<u8>, usize)> = trained.into_iter().collect::<Result<_>>()?;

        let received: u64 = trained.iter().map(|u| u.1.len() as u64).sum();
        let models: Vec<(Vec<Matrix>, usize)> = trained
            .iter()
            .map(|(_, blob, n)| decode_tensors(blob).map(|m| (m, *n)))
            .collect::<Result<_>>()?;
        let global = fedavg_aggregate(&models)?;
        let wire = encode_tensors(&global.iter().collect::<Vec<_>>());
        let mut up = Vec::new();
        let mut down = Vec::new();
        for (id, blob, _) in &trained {
            up.push((*id, blob.len() as u64));
            down.push((*id, wire.len() as u64));
            let tensors = decode_tensors(&wire)?;
            self.clients[*id].model.backbone.set_shared_tensors(&tensors)?;
        }
        if let Some(g) = &mut self.global_model {
            g.set_shared_tensors(&global)?;
        }
        self.record_ledger(t, &up, &down, received);
        self.last_uploads = trained.into_iter().map(|(id, b, _)| (id, b)).collect();
        Ok(())
    }

    fn evaluate(&self) -> Result<Vec<ClientMetric>> {
        let per_client: Vec<Result<Vec<ClientMetric>>> = self
            .clients
            .par_iter()
            .map(|c| {
                let cache = c.model.backbone.forward(&c.data.prep)?;
                let mut rows = Vec::new();
                for split in [Split::Train, Split::Val, Split::Test] {
                    if let Some((accuracy, loss)) = accuracy_and_loss(&cache.logits, &c.data.graph, split) {
                        rows.push(ClientMetric {
                            client_id: c.id,
                            split,
                            accuracy,
                            loss,
                            num_nodes: c.data.graph.nodes_in(split).len(),
                        });
                    }
                }
                Ok(rows)
            })
            .collect();
        let mut out = Vec::new();
        for rows in per_client {
            out.extend(rows?);
        }
        Ok(out)
    }
}

/// Local training followed by prototype construction; returns the encoded
/// upload.
fn client_prototype_step(c: &mut ClientState, cfg: &FederationConfig, t: usize, max_hop: usize) -> Result<Vec<u8>> {
    if !c.data.train_nodes().is_empty() {
        match &c.targets {
            Some(targets) => {
                let (_, soft) = predict(&c.model.backbone, &c.data.prep)?;
                let labels = pseudo_annotate(&soft, &c.data.graph, cfg.confidence_threshold);
                let nb = Neighborhoods::build(&c.data.graph, &labels, max_hop);
                let obj = ProtoObjective {
                    targets,
                    neighborhoods: &nb,
                    normalization: cfg.normalization,
                };
                for _ in 0..cfg.local_epochs {
                    train_epoch(&mut c.model, &c.data, Some(obj), cfg.lr, cfg.mu)?;
                }
            }
            None => {
                for _ in 0..cfg.local_epochs {
                    train_epoch(&mut c.model, &c.data, None, cfg.lr, 0.0)?;
                }
            }
        }
    }
    let cache = c.model.backbone.forward(&c.data.prep)?;
    let soft = softmax_rows(&cache.logits);
    let labels = pseudo_annotate(&soft, &c.data.graph, cfg.confidence_threshold);
    let protos = match cfg.method {
        Method::FedProtoNaive => naive_local_prototypes(&cache.projected, &labels),
        _ => {
            let nb = Neighborhoods::build(&c.data.graph, &labels, max_hop);
            PrototypeTape::record(&cache.projected, &nb, &c.model.scorer, cfg.normalization).0
        }
    };
    let protos = if cfg.noise_dim_fraction > 0.0 {
        add_prototype_noise(
            &protos,
            cfg.noise_dim_fraction,
            cfg.noise_sigma_rel,
            derive_seed(cfg.noise_seed, &[t as u64, c.id as u64]),
        )
    } else {
        protos
    };
    if protos.iter().any(|p| p.vector.iter().any(|x| !x.is_finite())) {
        return Err(FedError::Diverged("non-finite prototype".into()));
    }
    Ok(protos.encode())
}
