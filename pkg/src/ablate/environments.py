"""Built-in simulated environments.

``PUBLISHED_ARMS`` holds per-arm reward statistics (trials, mean, std) reported
for BioLORD, CPA and GEARS ablations. Each row becomes one arm with a single
component whose effect is drawn from N(mean, std) with no failures.
"""

from __future__ import annotations

from ablate.bandit import BanditParams
from ablate.config import ExecutorConfig, StudyConfig
from ablate.executor import SimulatedArmModel
from ablate.space import PARAM_GRID, REPLACE, SCALE, TOGGLE, Component, ComponentSpace, MutationSpec

# (arm id, display name, trials, mean, std)
PUBLISHED_ARMS: tuple[tuple[str, str, int, float, float], ...] = (
    ("biolord/unknown_attribute_latent", "Unknown-attribute latent embedding (z_u)", 7, 5.250, 0.945),
    ("biolord/known_attribute_embeddings", "Known-attribute embeddings", 8, 3.060, 0.551),
    ("biolord/minimality_loss", "Minimality loss (L_min)", 3, 4.500, 0.810),
    ("biolord/classification_module", "Classification module (biolord-classify)", 4, 6.500, 1.170),
    ("biolord/latent_aggregator", "Latent aggregator (concatenation)", 3, 6.100, 1.098),
    ("cpa/unified_latent_embedding", "Unified/composed latent embedding", 6, 4.920, 0.886),
    ("cpa/reconstruction_loss", "Reconstruction loss", 4, 5.750, 1.035),
    ("cpa/encoder_network", "Encoder network", 2, 2.000, 0.360),
    ("cpa/adversarial_discriminator", "Adversarial discriminator (classifier)", 5, 5.720, 1.030),
    ("cpa/perturbation_embedding_dictionary", "Perturbation embedding dictionary", 3, 2.670, 0.481),
    ("cpa/covariate_embedding_dictionary", "Covariate embedding dictionary", 3, 2.670, 0.481),
    ("cpa/dose_time_scalers", "Dose/time nonlinear scalers", 2, 1.500, 0.270),
    ("gears/combinatorial_aggregator", "Combinatorial perturbation aggregator", 4, 7.580, 1.364),
    ("gears/learnable_gene_embeddings", "Learnable gene embeddings", 4, 4.120, 0.742),
    ("gears/gene_gnn_encoder", "Gene GNN encoder (GNN_theta_g)", 7, 6.570, 1.183),
    ("gears/coexpression_graph", "Gene coexpression graph construction", 5, 3.670, 0.661),
    ("gears/perturbation_gnn_encoder", "Perturbation GNN encoder (GNN_theta_p)", 7, 6.700, 1.206),
    ("gears/go_similarity_graph", "GO-derived perturbation similarity graph", 4, 3.750, 0.675),
)

# eight concrete mutations per component, enough for any per-round budget up to 8
_SIM_MUTATIONS = (
    MutationSpec(TOGGLE),
    MutationSpec(SCALE, factors=(0.25, 0.5, 2.0, 4.0)),
    MutationSpec(REPLACE, alternatives=("frozen", "identity", "random_init")),
)


def benchmark_environment() -> dict[str, SimulatedArmModel]:
    return {arm: SimulatedArmModel(arm, mean, std, 0.0) for arm, _, _, mean, std in PUBLISHED_ARMS}


def benchmark_space() -> ComponentSpace:
    components = tuple(
        Component(id=arm, name=name, arm_id=arm, description=name, allowed_mutations=_SIM_MUTATIONS)
        for arm, name, *_ in PUBLISHED_ARMS
    )
    return ComponentSpace(
        components=components,
        arm_weights={arm: 1.0 for arm, *_ in PUBLISHED_ARMS},
        baseline_score=0.0,
        primary_metric="score",
    )


def benchmark_config(seed: int = 0, policy: str = "ucb", budget: int = 25, max_parallel: int = 1) -> StudyConfig:
    """R=5 rounds, K=5 candidates per round in every tier, B=25 executions."""
    return StudyConfig(
        space=benchmark_space(),
        executor=ExecutorConfig(kind="simulated", env=benchmark_environment()),
        bandit=BanditParams(beta_base=2.0, max_rounds=5, k_explore=5, k_base=5, k_exploit=5, lam=0.01),
        budget=budget,
        seed=seed,
        max_parallel=max_parallel,
        policy=policy,
        k=5,
        name="benchmark-sim",
    )


# CPA-like space: 12 components, 8 toggles, 3 scales, 1 replacement, grouped
# into the seven CPA hypothesis families above.
CPA_LIKE_COMPONENTS: tuple[tuple[str, str, str, MutationSpec], ...] = (
    ("latent_composition", "Unified/composed latent embedding", "cpa/unified_latent_embedding", MutationSpec(TOGGLE)),
    ("latent_dim", "Latent dimensionality", "cpa/unified_latent_embedding", MutationSpec(SCALE, factors=(0.5, 2.0))),
    ("recon_loss", "Reconstruction loss", "cpa/reconstruction_loss", MutationSpec(REPLACE, alternatives=("nb",))),
    ("encoder", "Encoder network", "cpa/encoder_network", MutationSpec(TOGGLE)),
    ("encoder_width", "Encoder width", "cpa/encoder_network", MutationSpec(SCALE, factors=(0.5, 2.0))),
    ("adversary", "Adversarial discriminator", "cpa/adversarial_discriminator", MutationSpec(TOGGLE)),
    ("adversary_weight", "Adversarial loss weight", "cpa/adversarial_discriminator", MutationSpec(SCALE, factors=(0.5, 2.0))),
    ("adversary_penalty", "Gradient penalty", "cpa/adversarial_discriminator", MutationSpec(TOGGLE)),
    ("pert_embedding", "Perturbation embedding dictionary", "cpa/perturbation_embedding_dictionary", MutationSpec(TOGGLE)),
    ("cov_embedding", "Covariate embedding dictionary", "cpa/covariate_embedding_dictionary", MutationSpec(TOGGLE)),
    ("dose_scaler", "Dose nonlinear scaler", "cpa/dose_time_scalers", MutationSpec(TOGGLE)),
    ("time_scaler", "Time nonlinear scaler", "cpa/dose_time_scalers", MutationSpec(TOGGLE)),
)


def cpa_like_space() -> ComponentSpace:
    comps = tuple(
        Component(id=cid, name=name, arm_id=arm, description=name, allowed_mutations=(spec,))
        for cid, name, arm, spec in CPA_LIKE_COMPONENTS
    )
    arms = sorted({arm for _, _, arm, _ in CPA_LIKE_COMPONENTS})
    return ComponentSpace(comps, {a: 1.0 for a in arms}, baseline_score=0.9129, primary_metric="pearson")


def mutation_type_counts(space: ComponentSpace) -> dict[str, int]:
    counts = {TOGGLE: 0, SCALE: 0, REPLACE: 0, PARAM_GRID: 0}
    for c in space.components:
        for spec in c.allowed_mutations:
            counts[spec.kind] += 1
    return counts
