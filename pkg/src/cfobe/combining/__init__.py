from .base import (BEMatrix, CombinerSet, be_combine, c_mr, c_mmse, l_mr, l_mmse,
                   error_noise_cov)
from .terms import (ClosedFormTerms, CollectiveView, DistributedTerms, block_support,
                    centralized_gamma, distributed_lambda, upsilon)
from .obe import (OBEDesign, c_obe_closed, c_obe_closed_nophase, c_obe_mc, dg_obe_closed,
                  dg_obe_mc, dl_obe_closed, dl_obe_mc, mc_system)
from .lsfd import lsfd_weights, lsfd_sinr
