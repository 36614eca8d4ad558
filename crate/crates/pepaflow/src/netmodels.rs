//! Built-in, parameterized network-model library: the service-driven
//! (proposed) control-plane models and their 3GPP 5GS counterparts, for
//! the PDU session establishment and user mobility procedures, each
//! paired with its procedure spec and processor groups.
//!
//! Model files ship under `models/` in the `.pepa` format and are
//! embedded at build time; setting `PEPAFLOW_MODELS` to a directory
//! overrides them (files named `<id>.pepa` with `-` replaced by `_`).
//!
//! The default rate table is configuration, not ground truth: message
//! exchanges at `r_r = 100`, processor acquisition at `r_a = 10000`
//! (acquisition is cheap next to processing, which keeps a saturated
//! processor near full utilization), processing at `r_p = 50`, and a UE
//! think rate `r_iat = 1`. `N_t = 32` threads per processor keep the
//! processors, not the thread pools, as the binding resource, and the
//! pipelines deep enough that the fluid limit tracks the stochastic
//! semantics closely. The UPF in the PDU models is provisioned with two
//! processors per instance so that tripling the session-plane functions
//! shifts no bottleneck onto the user plane.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::ast::{validate_model, BindError, Bindings, ConcreteModel, Model, ValidationReport};
use crate::metrics::{ProcedureSpec, ProcessorGroup};
use crate::parser::{parse_model, ParseError, SourceModel};
use crate::semantics::{compile, CompileError, CompiledSystem};

/// Environment variable that overrides the built-in model directory.
pub const MODELS_ENV: &str = "PEPAFLOW_MODELS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchitectureId {
    ProposedPdu,
    ProposedMobility,
    FivegPdu,
    FivegMobility,
}

pub const ARCHITECTURES: [ArchitectureId; 4] = [
    ArchitectureId::ProposedPdu,
    ArchitectureId::ProposedMobility,
    ArchitectureId::FivegPdu,
    ArchitectureId::FivegMobility,
];

impl ArchitectureId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchitectureId::ProposedPdu => "proposed-pdu",
            ArchitectureId::ProposedMobility => "proposed-mobility",
            ArchitectureId::FivegPdu => "fiveg-pdu",
            ArchitectureId::FivegMobility => "fiveg-mobility",
        }
    }

    pub fn parse(s: &str) -> Option<ArchitectureId> {
        ARCHITECTURES.into_iter().find(|a| a.as_str() == s)
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            ArchitectureId::ProposedPdu => "proposed_pdu.pepa",
            ArchitectureId::ProposedMobility => "proposed_mobility.pepa",
            ArchitectureId::FivegPdu => "fiveg_pdu.pepa",
            ArchitectureId::FivegMobility => "fiveg_mobility.pepa",
        }
    }

    /// True for the user-mobility procedure models.
    pub fn is_mobility(&self) -> bool {
        matches!(self, ArchitectureId::ProposedMobility | ArchitectureId::FivegMobility)
    }
}

#[derive(Debug, Error)]
pub enum NetModelError {
    #[error("unknown architecture id {0}")]
    UnknownArchitecture(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("model does not validate:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}

/// Sweep-point configuration: UE count, per-NF instance and processor
/// counts, threads per processor, the rate table, and the response-time
/// target used by the productivity metric.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub n: u64,
    /// Overrides for instance/processor/thread counts (`N_*`).
    pub counts: BTreeMap<String, u64>,
    /// Overrides for the rate table (`r_*`).
    pub rates: BTreeMap<String, f64>,
    /// Target average response time; resolved to twice the low-load
    /// response time of the basic configuration when absent.
    pub target_t: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(n: u64) -> Self {
        ExperimentConfig { n, ..Default::default() }
    }

    pub fn with_count(mut self, name: &str, v: u64) -> Self {
        self.counts.insert(name.to_string(), v);
        self
    }

    pub fn with_rate(mut self, name: &str, v: f64) -> Self {
        self.rates.insert(name.to_string(), v);
        self
    }
}

/// Names and defaults a model expects from its configuration.
#[derive(Debug, Clone)]
pub struct ConfigSchema {
    pub counts: Vec<(&'static str, u64)>,
    pub rates: Vec<(&'static str, f64)>,
}

const DEFAULT_RATES: [(&str, f64); 4] =
    [("r_r", 100.0), ("r_a", 10_000.0), ("r_p", 50.0), ("r_iat", 1.0)];

fn schema(id: ArchitectureId) -> ConfigSchema {
    let counts: Vec<(&'static str, u64)> = match id {
        ArchitectureId::ProposedPdu => vec![
            ("N_pssf", 1),
            ("N_con", 1),
            ("N_upf", 1),
            ("N_pssfp", 1),
            ("N_conp", 1),
            ("N_upfp", 2),
            ("N_t", 32),
        ],
        ArchitectureId::FivegPdu => vec![
            ("N_amf", 1),
            ("N_smf", 1),
            ("N_upf", 1),
            ("N_amfp", 1),
            ("N_smfp", 1),
            ("N_upfp", 2),
            ("N_t", 32),
        ],
        ArchitectureId::ProposedMobility => vec![
            ("N_upt", 1),
            ("N_msf", 2),
            ("N_ran", 2),
            ("N_cn", 1),
            ("N_upf", 1),
            ("N_uptp", 1),
            ("N_msfp", 1),
            ("N_ranp", 1),
            ("N_cnp", 1),
            ("N_upfp", 1),
            ("N_t", 32),
        ],
        ArchitectureId::FivegMobility => vec![
            ("N_sdu", 1),
            ("N_scu", 1),
            ("N_tdu", 1),
            ("N_tcu", 1),
            ("N_amf", 1),
            ("N_smf", 1),
            ("N_upf", 1),
            ("N_sdup", 1),
            ("N_scup", 1),
            ("N_tdup", 1),
            ("N_tcup", 1),
            ("N_amfp", 1),
            ("N_smfp", 1),
            ("N_upfp", 1),
            ("N_t", 32),
        ],
    };
    ConfigSchema { counts, rates: DEFAULT_RATES.to_vec() }
}

/// The basic configuration: single NF instances everywhere (the mobility
/// service keeps its two MSF and two RAN-controller instances).
pub fn basic_config(id: ArchitectureId, n: u64) -> ExperimentConfig {
    let _ = id;
    ExperimentConfig::new(n)
}

/// The scaled configuration: three-fold session-plane instances for the
/// PDU models, three-fold everything for the mobility models.
pub fn scaled_config(id: ArchitectureId, n: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(n);
    let scaled: &[(&str, u64)] = match id {
        ArchitectureId::ProposedPdu => &[("N_pssf", 3), ("N_con", 3), ("N_upf", 1)],
        ArchitectureId::FivegPdu => &[("N_amf", 3), ("N_smf", 3), ("N_upf", 1)],
        ArchitectureId::ProposedMobility => {
            &[("N_upt", 3), ("N_msf", 6), ("N_ran", 6), ("N_cn", 3), ("N_upf", 3)]
        }
        ArchitectureId::FivegMobility => &[
            ("N_sdu", 3),
            ("N_scu", 3),
            ("N_tdu", 3),
            ("N_tcu", 3),
            ("N_amf", 3),
            ("N_smf", 3),
            ("N_upf", 3),
        ],
    };
    for (k, v) in scaled {
        c.counts.insert((*k).to_string(), *v);
    }
    c
}

/// The shipped model text for an id, from `PEPAFLOW_MODELS` if set,
/// otherwise the embedded copy.
pub fn builtin_model_text(id: ArchitectureId) -> Result<SourceModel, NetModelError> {
    if let Ok(dir) = std::env::var(MODELS_ENV) {
        if !dir.is_empty() {
            let path = std::path::Path::new(&dir).join(id.file_name());
            let text = std::fs::read_to_string(&path).map_err(|source| NetModelError::Io {
                path: path.display().to_string(),
                source,
            })?;
            return Ok(SourceModel::from_file(&path.display().to_string(), text));
        }
    }
    let text = match id {
        ArchitectureId::ProposedPdu => include_str!("../models/proposed_pdu.pepa"),
        ArchitectureId::ProposedMobility => include_str!("../models/proposed_mobility.pepa"),
        ArchitectureId::FivegPdu => include_str!("../models/fiveg_pdu.pepa"),
        ArchitectureId::FivegMobility => include_str!("../models/fiveg_mobility.pepa"),
    };
    Ok(SourceModel {
        text: text.to_string(),
        origin: format!("builtin:{}", id.as_str()),
    })
}

/// A parsed and validated built-in model plus its metric wiring.
#[derive(Debug, Clone)]
pub struct ArchitectureModel {
    pub id: ArchitectureId,
    pub model: Model,
    pub schema: ConfigSchema,
}

pub fn architecture(id: ArchitectureId) -> Result<ArchitectureModel, NetModelError> {
    let src = builtin_model_text(id)?;
    let model = parse_model(&src)?;
    let report = validate_model(&model);
    if !report.is_clean() {
        return Err(NetModelError::Validation(report));
    }
    Ok(ArchitectureModel { id, model, schema: schema(id) })
}

/// A fully bound and compiled architecture instance.
#[derive(Debug, Clone)]
pub struct Instantiated {
    pub id: ArchitectureId,
    pub concrete: ConcreteModel,
    pub system: Arc<CompiledSystem>,
    pub procedure: ProcedureSpec,
    pub groups: Vec<ProcessorGroup>,
}

fn procedure_spec(id: ArchitectureId) -> ProcedureSpec {
    match id {
        // The UE is in procedure from the instant its initiating request
        // synchronizes until it returns to its initial state. For the PDU
        // models the request fires from Ue2 (so Ue2 is still idle: the
        // request is pending admission); for mobility the measurement
        // fires from the think state Ue1#1.
        ArchitectureId::ProposedPdu | ArchitectureId::FivegPdu => ProcedureSpec {
            completion_action: "rep_pduse".into(),
            initiator_group: "Ue1".into(),
            idle_states: vec!["Ue1".into(), "Ue1#1".into(), "Ue2".into()],
        },
        // Handover completion: the session modification command toward
        // the user plane.
        ArchitectureId::ProposedMobility => ProcedureSpec {
            completion_action: "session".into(),
            initiator_group: "Ue1".into(),
            idle_states: vec!["Ue1".into(), "Ue1#1".into()],
        },
        ArchitectureId::FivegMobility => ProcedureSpec {
            completion_action: "pathswitchack".into(),
            initiator_group: "Ue1".into(),
            idle_states: vec!["Ue1".into(), "Ue1#1".into()],
        },
    }
}

/// NF processor groups per architecture: (display name, leaf constant).
/// UE processors scale with n and are end-device resources, so they are
/// not part of the network processor-utilization set.
fn processor_leaves(id: ArchitectureId) -> &'static [(&'static str, &'static str)] {
    match id {
        ArchitectureId::ProposedPdu => {
            &[("PSSFP", "Pssfp1"), ("CONP", "Conp1"), ("UPFP", "Upfp1")]
        }
        ArchitectureId::FivegPdu => &[("AMFP", "Amfp1"), ("SMFP", "Smfp1"), ("UPFP", "Upfp1")],
        ArchitectureId::ProposedMobility => &[
            ("UPTP", "Uptp1"),
            ("MSFP", "Msfp1"),
            ("RANP", "Ranp1"),
            ("CNP", "Cnp1"),
            ("UPFP", "Upfp1"),
        ],
        ArchitectureId::FivegMobility => &[
            ("SDUP", "Sdup1"),
            ("SCUP", "Scup1"),
            ("TCUP", "Tcup1"),
            ("TDUP", "Tdup1"),
            ("AMFP", "Amfp1"),
            ("SMFP", "Smfp1"),
            ("UPFP", "Upfp1"),
        ],
    }
}

/// Resolves a configuration against the schema into full bindings.
/// Unknown override names are rejected.
pub fn resolve_bindings(
    arch: &ArchitectureModel,
    config: &ExperimentConfig,
) -> Result<Bindings, NetModelError> {
    let mut b = Bindings::default();
    for (name, v) in &arch.schema.counts {
        b.counts.insert((*name).to_string(), *v);
    }
    for (name, v) in &arch.schema.rates {
        b.rates.insert((*name).to_string(), *v);
    }
    b.counts.insert("n".to_string(), config.n);
    for (k, v) in &config.counts {
        if k != "n" && !arch.schema.counts.iter().any(|(name, _)| name == k) {
            return Err(NetModelError::UnknownParameter(k.clone()));
        }
        b.counts.insert(k.clone(), *v);
    }
    for (k, v) in &config.rates {
        if !arch.schema.rates.iter().any(|(name, _)| name == k) {
            return Err(NetModelError::UnknownParameter(k.clone()));
        }
        b.rates.insert(k.clone(), *v);
    }
    Ok(b)
}

/// Binds and compiles an architecture for one configuration, with
/// populations set to the `N_nf * N_nfp * N_t` products the system
/// equation prescribes and processor populations to `N_nf * N_nfp`.
pub fn instantiate(
    id: ArchitectureId,
    config: &ExperimentConfig,
) -> Result<Instantiated, NetModelError> {
    let arch = architecture(id)?;
    let bindings = resolve_bindings(&arch, config)?;
    let concrete = arch.model.bind(&bindings)?;
    let system = Arc::new(compile(&concrete)?);

    let mut groups = Vec::new();
    for (name, leaf) in processor_leaves(id) {
        let gi = system
            .group_index(leaf)
            .unwrap_or_else(|| panic!("processor group {leaf} missing from system equation"));
        let g = &system.groups[gi];
        // Busy whenever not in the acquirable initial state.
        let busy_states: Vec<String> =
            g.states.iter().skip(1).map(|s| s.name.clone()).collect();
        groups.push(ProcessorGroup {
            name: (*name).to_string(),
            group: (*leaf).to_string(),
            busy_states,
            capacity: g.population,
        });
    }

    Ok(Instantiated { id, concrete, system, procedure: procedure_spec(id), groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_parse_and_validate() {
        for id in ARCHITECTURES {
            let arch = architecture(id).unwrap();
            assert!(!arch.model.definitions.is_empty());
        }
    }

    #[test]
    fn proposed_pdu_cooperation_sets_match_the_flow() {
        // The CN controller commands the UPF without a synchronized reply:
        // req_n4est is shared, rep_n4est is not.
        let arch = architecture(ArchitectureId::ProposedPdu).unwrap();
        let text = serialize_coop_sets(&arch.model);
        assert!(text.iter().any(|s| s == "req_n4est"), "{text:?}");
        assert!(!text.iter().any(|s| s == "rep_n4est"), "{text:?}");
    }

    #[test]
    fn fiveg_pdu_has_n4_request_and_response() {
        let arch = architecture(ArchitectureId::FivegPdu).unwrap();
        let text = serialize_coop_sets(&arch.model);
        assert!(text.iter().any(|s| s == "req_n4est"));
        assert!(text.iter().any(|s| s == "rep_n4est"));
    }

    #[test]
    fn mobility_rach_is_shared() {
        let arch = architecture(ArchitectureId::ProposedMobility).unwrap();
        let text = serialize_coop_sets(&arch.model);
        assert!(text.iter().any(|s| s == "rachreq"));
        assert!(text.iter().any(|s| s == "rachres"));
    }

    fn serialize_coop_sets(model: &Model) -> Vec<String> {
        fn walk(e: &crate::ast::ProcessExpr, out: &mut Vec<String>) {
            if let crate::ast::ProcessExpr::Cooperation { left, set, right } = e {
                out.extend(set.actions.iter().cloned());
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&model.system, &mut out);
        out
    }

    #[test]
    fn basic_instantiation_populations() {
        let cfg = ExperimentConfig::new(1000).with_count("N_t", 1);
        let inst = instantiate(ArchitectureId::ProposedPdu, &cfg).unwrap();
        assert_eq!(inst.concrete.population_of("Ue1"), Some(1000));
        assert_eq!(inst.concrete.population_of("Pssf1"), Some(1));
        assert_eq!(inst.concrete.population_of("Con1"), Some(1));
        // UPF instances x two processors x one thread.
        assert_eq!(inst.concrete.population_of("Upf1"), Some(2));
        assert_eq!(inst.concrete.population_of("Upfp1"), Some(2));
    }

    #[test]
    fn scaled_pdu_instantiation_populations() {
        let mut cfg = scaled_config(ArchitectureId::ProposedPdu, 10);
        cfg.counts.insert("N_t".into(), 1);
        cfg.counts.insert("N_upfp".into(), 1);
        let inst = instantiate(ArchitectureId::ProposedPdu, &cfg).unwrap();
        assert_eq!(inst.concrete.population_of("Pssf1"), Some(3));
        assert_eq!(inst.concrete.population_of("Upf1"), Some(1));
        assert_eq!(inst.concrete.population_of("Pssfp1"), Some(3));
    }

    #[test]
    fn scaled_mobility_instance_counts() {
        let mut cfg = scaled_config(ArchitectureId::ProposedMobility, 10);
        cfg.counts.insert("N_t".into(), 1);
        let inst = instantiate(ArchitectureId::ProposedMobility, &cfg).unwrap();
        assert_eq!(inst.concrete.population_of("Upt1"), Some(3));
        assert_eq!(inst.concrete.population_of("Msf1"), Some(6));
        assert_eq!(inst.concrete.population_of("Ran1"), Some(6));
        assert_eq!(inst.concrete.population_of("Cn1"), Some(3));
        assert_eq!(inst.concrete.population_of("Upf1"), Some(3));
    }

    #[test]
    fn fiveg_pdu_scaled_populations() {
        let mut cfg = scaled_config(ArchitectureId::FivegPdu, 5);
        cfg.counts.insert("N_t".into(), 1);
        cfg.counts.insert("N_upfp".into(), 1);
        let inst = instantiate(ArchitectureId::FivegPdu, &cfg).unwrap();
        assert_eq!(inst.concrete.population_of("Amf1"), Some(3));
        assert_eq!(inst.concrete.population_of("Smf1"), Some(3));
        assert_eq!(inst.concrete.population_of("Upf1"), Some(1));
    }

    #[test]
    fn unknown_parameter_rejected() {
        let cfg = ExperimentConfig::new(10).with_count("N_bogus", 2);
        match instantiate(ArchitectureId::ProposedPdu, &cfg) {
            Err(NetModelError::UnknownParameter(k)) => assert_eq!(k, "N_bogus"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn procedure_states_exist() {
        for id in ARCHITECTURES {
            let inst = instantiate(id, &ExperimentConfig::new(2)).unwrap();
            let sys = &inst.system;
            assert!(
                sys.action_id(&inst.procedure.completion_action).is_some(),
                "{id:?}: completion action missing"
            );
            for s in &inst.procedure.idle_states {
                assert!(
                    sys.state_global_index(&inst.procedure.initiator_group, s).is_some(),
                    "{id:?}: idle state {s} missing"
                );
            }
            for g in &inst.groups {
                assert!(!g.busy_states.is_empty());
                assert!(g.capacity >= 1);
                for s in &g.busy_states {
                    assert!(
                        sys.state_global_index(&g.group, s).is_some(),
                        "{id:?}: busy state {}.{s} missing",
                        g.group
                    );
                }
            }
        }
    }
}
