"""This module is used to configure some default values which are reused in the code."""

import math

# FIR truncation and frequency sampling
DefaultFirOrder = 40
DefaultGridPoints = 200
MaxCertifiedHorizon = 5000

# conic solver settings
DefaultSolver = "CLARABEL"
DefaultQpSolver = "CLARABEL"
SolverEnvVariable = "REGRET_SOLVER"
QpSolverEnvVariable = "REGRET_QP_SOLVER"
LpTolerance = 1e-8
SdpTolerance = 1e-7
DefaultMaxSolverIterations = 500
StrictPositivityFloor = 1e-12

# impulse response truncation
TailTolerance = 1e-8
SynthesisTailTolerance = 1e-6
FirClosureTolerance = 1e-6
FirClosureMargin = 0.1
ProjectionClosureBound = (1 - FirClosureMargin) * FirClosureTolerance

# structural checks
FixedModeTolerance = 1e-6
FixedModeSamples = 5
HermitianTolerance = 1e-9
FactorizationSamples = 32
EigengapTolerance = 1e-6

# pre-stabilization
StabilizationDecayTargets = [0.95, 0.99, 1 - 1e-4]
StabilizationRandomTrials = 2000
StabilizationPatterns = ["graph", "block-diagonal"]

# ADMM
DefaultAdmmRho = 1.0
DefaultAdmmMaxIterations = 500
AdmmAbsTolerance = 1e-6
AdmmRelTolerance = 1e-4
ResidualBalanceRatio = 10.0
ResidualBalanceFactor = 2.0
GoldenRatio = (math.sqrt(5) - 1) / 2
LineSearchTolerance = 1e-6
BracketExpansions = 30

# power grid benchmark
GridDefaults = {
    "inertia": 1.0,
    "damping": 2.0,
    "coupling": 20.0,
    "sampling_time": 0.1,
}
DefaultTopologyFile = "data/sixteen_bus_grid.json"
LongTestsEnvVariable = "REGRET_LONG_TESTS"

SynthesisCriteria = ["H2", "Hinf", "L1"]
RunModes = [
    "oracle",
    "spreg2",
    "spreg-inf",
    "spreg-inf-admm",
    "analyze",
    "simulate",
    "experiment",
]
ExperimentNames = ["five_bus_spreg2", "sixteen_bus_spreg_inf"]
