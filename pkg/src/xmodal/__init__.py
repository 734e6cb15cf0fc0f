"""xmodal: unpaired bidirectional CT/MRI translation at desk scale.

A patch-conditioned cyclic conditional GAN with an adaptive
dictionary-learning restoration branch, plus phantom data generation,
image quality metrics, and an ablation harness.
"""

__version__ = "0.1.0"

from .conditioning import (ConditioningSpec, ConditioningTensor,
                           InterleavedPatchSequence, PatchGrid,
                           build_scenario_conditioning, deinterleave,
                           downsample_conditioning, extract_patches,
                           interleave_alternate, sequence_to_conditioning)
from .dictionary import (Dictionary, DiLConfig, SparseCodeSet, compute_residue,
                         init_dictionary, restore_step, sparse_code,
                         update_dictionary)
from .imaging import (Image, MetricReport, PhantomSpec, generate_phantom_pair,
                      generate_unpaired_dataset, load_image, metric_report,
                      psnr, rmse, save_image, ssim)
from .networks import (DiscriminatorSpec, GeneratorSpec, build_discriminator,
                       build_generator, discriminator_parameter_count,
                       generator_parameter_count)
from .training import (CT2MRI, MRI2CT, EpochStats, LossWeights, TrainConfig,
                       adversarial_loss_backward, adversarial_loss_forward,
                       cycle_translate, cyclic_loss, identity_loss,
                       init_train_state, total_loss, train, train_step,
                       translate)
