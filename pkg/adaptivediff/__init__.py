from adaptivediff.utils import *
from adaptivediff.latent import *
from adaptivediff.scheduler import *
from adaptivediff.denoiser import *
from adaptivediff.controller import *
from adaptivediff.param_parser import ParamParser, RunConfig
