from privateequilibria.audit.proxy_audit import beach_counterexample
from privateequilibria.games.beach_mountain.beach_mountain_game import BeachMountainGame
from privateequilibria.mechanisms.laplace_mechanism import LaplaceMechanism, run_nrlaplace
from privateequilibria.src.base_verifier import verify
from privateequilibria.src.privacy import PrivacyBudget, plan_for_nrlaplace


def main():
    # 1. Build the game
    print("Building game...")
    game = BeachMountainGame.from_config(n=200, beach_fraction=0.5, seed=42)
    print(f"{game!r}: {game.beach_count()} beach types")

    # 2. Plan
    budget = PrivacyBudget(epsilon=1.0, delta=1e-6)
    plan = plan_for_nrlaplace(game.n, game.k, game.gamma, budget.epsilon, budget.delta, 0.05)
    print(f"Auto plan: {plan.message() if not plan.feasible else plan}")

    # 3. Run with an explicit T (the desk-scale constraint is infeasible even at T=1)
    print("\nRunning NRLaplace with T=100...")
    run = run_nrlaplace(game, budget, beta=0.05, seed=42, T=100)
    print(f"sigma={run.plan.sigma:.4f}, clamped losses: {run.clamped_total}")
    print(f"Ledger: {run.ledger.to_dict()}")

    # 4. Verify
    print("\nVerifying...")
    certificate = verify(run.distribution, game)
    print(f"alpha_cce={certificate.alpha_cce:.6f} alpha_ce={certificate.alpha_ce:.6f} ({certificate.mode})")
    print(f"predicted alpha={run.predicted_alpha:.4f}")

    # 5. Naive rule versus the private mechanism on the near-critical prior
    print("\nAuditing the naive majority rule (n=101, 51 mountain types)...")
    naive = beach_counterexample(n=101)
    print(f"opt-out gain {naive.opt_out_gain:.4f}, excess {naive.opt_out_excess:.4f}")

    print("Auditing NRLaplace on the same prior...")
    private = beach_counterexample(n=101, mechanism=LaplaceMechanism(budget, T=30), trials=5)
    print(f"opt-out gain {private.opt_out_gain:.4f}, excess {private.opt_out_excess:.4f}")


if __name__ == "__main__":
    main()
