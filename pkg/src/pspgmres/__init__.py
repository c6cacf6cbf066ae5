"""Restarted GMRES with a banded preconditioner fitted to its own probe history."""
from .core import (BandedMatrix, ContractError, CSRMatrix, LinearOperator, ProbeHistory,
                   aslinearoperator, axpy, banded_matvec, csr_matvec, dot, norm2, probe_record)
from .banded import (BandedFactorization, SingularMatrixError, banded_lu_factor, banded_lu_solve,
                     factorize, thomas_solve)
from .gmres import (DivergenceError, GmresConfig, GmresWorkspace, PreconditionerError, SolveReport,
                    arnoldi_step, form_solution, givens_update, psp_gmres)
from .mrep import PreconditionerEstimate, RegressionDesign, mrep, multi_regress, simple_linear_fit
from .problems import (GeneratorConfig, StencilSpec, TimeStepPlan, gen_seven_diagonal, heat1d_operator,
                       stencil_operator, time_step_driver)

__version__ = '0.1.0'
