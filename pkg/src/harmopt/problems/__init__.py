from .lotsizing import (ComonotonePath, LotSizingInstance, band_floor, build_lotsizing_program,
                        generate_lotsizing_instance, long_worst_case, lotsizing_ho_solve, lotsizing_out_of_sample,
                        sample_demands, second_stage_cost, second_stage_costs)
from .portfolio import (PortfolioInstance, generate_portfolio_samples, mean_cvar, portfolio_pieces,
                        portfolio_problem, portfolio_space)

__all__ = [
    "ComonotonePath", "LotSizingInstance", "band_floor", "build_lotsizing_program", "generate_lotsizing_instance",
    "long_worst_case", "lotsizing_ho_solve", "lotsizing_out_of_sample", "sample_demands", "second_stage_cost",
    "second_stage_costs", "PortfolioInstance", "generate_portfolio_samples", "mean_cvar", "portfolio_pieces",
    "portfolio_problem", "portfolio_space",
]
