//! Multi-round domain scheduling: a manifest pins every frame's domain,
//! boundary flag, and scene seed, so iterating it twice yields identical
//! byte streams and ablation variants can share one stream exactly.

use dat_numerics::rng::{derive_seed, purpose, stream_rng};
use dat_numerics::{ClassMap, Tensor};

use crate::corrupt::{corrupt, DomainKind, DomainSpec};
use crate::error::{Result, StreamError};
use crate::scene::{gen_scene, SceneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub scene: SceneConfig,
    /// Domain sequence for one round.
    pub domains: Vec<DomainSpec>,
    pub frames_per_domain: usize,
    pub rounds: usize,
    /// Ramp severity linearly from 0 to the domain's severity across each
    /// segment (gradual-transition variant). Boundary flags stay at segment
    /// starts.
    pub severity_ramp: bool,
    pub master_seed: u64,
}

impl StreamConfig {
    /// The fog→night→rain→snow protocol at default severities.
    pub fn default_protocol(master_seed: u64) -> Self {
        let domains = [DomainKind::Fog, DomainKind::Night, DomainKind::Rain, DomainKind::Snow]
            .iter()
            .map(|&kind| DomainSpec { kind, severity: kind.default_severity() })
            .collect();
        Self {
            scene: SceneConfig::default(),
            domains,
            frames_per_domain: 120,
            rounds: 3,
            severity_ramp: false,
            master_seed,
        }
    }

    /// Single clear-sky domain, used for source pretraining.
    pub fn clean(master_seed: u64, frames: usize) -> Self {
        Self {
            scene: SceneConfig::default(),
            domains: vec![DomainSpec { kind: DomainKind::Clear, severity: 0.0 }],
            frames_per_domain: frames,
            rounds: 1,
            severity_ramp: false,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.domains.is_empty() {
            return Err(StreamError::Config("stream needs at least one domain".into()));
        }
        if self.frames_per_domain == 0 || self.rounds == 0 {
            return Err(StreamError::Config(format!(
                "frames_per_domain ({}) and rounds ({}) must be >= 1",
                self.frames_per_domain, self.rounds
            )));
        }
        for d in &self.domains {
            if !(0.0..=1.0).contains(&d.severity) {
                return Err(StreamError::Config(format!(
                    "severity {} out of [0,1] for {}",
                    d.severity,
                    d.kind.name()
                )));
            }
        }
        Ok(())
    }
}

/// Per-frame schedule entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_id: usize,
    /// 1-based round index.
    pub round: usize,
    pub domain_index: usize,
    pub boundary: bool,
    pub scene_seed: u64,
}

/// One frame handed to the adaptation loop.
#[derive(Debug, Clone)]
pub struct Sample {
    pub frame_id: usize,
    pub round: usize,
    pub domain_index: usize,
    pub domain: DomainSpec,
    pub boundary: bool,
    pub image: Tensor,
    pub label: Option<ClassMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamManifest {
    cfg: StreamConfig,
    records: Vec<FrameRecord>,
}

impl StreamManifest {
    pub fn build(cfg: StreamConfig) -> Result<Self> {
        cfg.validate()?;
        let mut records = Vec::with_capacity(cfg.rounds * cfg.domains.len() * cfg.frames_per_domain);
        let mut frame_id = 0usize;
        for round in 1..=cfg.rounds {
            for (domain_index, _) in cfg.domains.iter().enumerate() {
                for pos in 0..cfg.frames_per_domain {
                    records.push(FrameRecord {
                        frame_id,
                        round,
                        domain_index,
                        boundary: pos == 0,
                        scene_seed: derive_seed(cfg.master_seed, &[purpose::SCENE, frame_id as u64]),
                    });
                    frame_id += 1;
                }
            }
        }
        Ok(Self { cfg, records })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn domain_name(&self, index: usize) -> &'static str {
        self.cfg.domains[index].kind.name()
    }

    /// Effective severity for a record (applies the ramp when configured).
    fn severity_at(&self, rec: &FrameRecord) -> f32 {
        let base = self.cfg.domains[rec.domain_index].severity;
        if !self.cfg.severity_ramp {
            return base;
        }
        let pos = rec.frame_id % self.cfg.frames_per_domain;
        let den = (self.cfg.frames_per_domain - 1).max(1) as f32;
        base * (pos as f32 / den)
    }

    /// Deterministically materialize one frame.
    pub fn sample(&self, index: usize) -> Result<Sample> {
        let rec = self.records[index];
        let (clean, label) = gen_scene(rec.scene_seed, &self.cfg.scene)?;
        let spec = DomainSpec {
            kind: self.cfg.domains[rec.domain_index].kind,
            severity: self.severity_at(&rec),
        };
        let mut rng =
            stream_rng(self.cfg.master_seed, &[purpose::CORRUPT, rec.frame_id as u64]);
        let image = corrupt(&clean, &spec, &mut rng)?;
        Ok(Sample {
            frame_id: rec.frame_id,
            round: rec.round,
            domain_index: rec.domain_index,
            domain: spec,
            boundary: rec.boundary,
            image,
            label: Some(label),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Sample>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// FNV-1a over the full schedule (scene config, domains, records):
    /// identical streams hash identically.
    pub fn manifest_hash(&self) -> u64 {
        let mut h = Fnv::new();
        h.usize(self.cfg.scene.height);
        h.usize(self.cfg.scene.width);
        h.usize(self.cfg.scene.num_classes);
        h.usize(self.cfg.scene.min_shapes);
        h.usize(self.cfg.scene.max_shapes);
        h.u32(self.cfg.scene.noise.to_bits());
        h.u64(self.cfg.master_seed);
        h.usize(self.cfg.severity_ramp as usize);
        for d in &self.cfg.domains {
            h.bytes(d.kind.name().as_bytes());
            h.u32(d.severity.to_bits());
        }
        for r in &self.records {
            h.usize(r.frame_id);
            h.usize(r.round);
            h.usize(r.domain_index);
            h.usize(r.boundary as usize);
            h.u64(r.scene_seed);
        }
        h.finish()
    }

    /// Hash of the protocol shape only (domains × rounds × frames, scene
    /// dims, class count); reports refuse to aggregate across different
    /// structures.
    pub fn structure_hash(&self) -> u64 {
        let mut h = Fnv::new();
        for d in &self.cfg.domains {
            h.bytes(d.kind.name().as_bytes());
        }
        h.usize(self.cfg.frames_per_domain);
        h.usize(self.cfg.rounds);
        h.usize(self.cfg.scene.height);
        h.usize(self.cfg.scene.width);
        h.usize(self.cfg.scene.num_classes);
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn bytes(&mut self, bs: &[u8]) {
        for &b in bs {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
