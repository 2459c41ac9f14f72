from aslchamp.templates import TemplateLibrary
from aslchamp.synth import DatasetSpec, generate_dataset
from aslchamp.filetypes import write_dataset
from aslchamp.general import child_seed
from aslchamp.gesture import sign_code
from aslchamp.network import NetConfig, build_network
from aslchamp.training import TrainConfig, train, plot_training
from aslchamp.evaluation import (SplitSpec, split_dataset, evaluate,
        render_metrics, plot_confusion)
from aslchamp.lesson import (LessonPlan, LearnerProfile, simulate_learner,
        write_transcript)

seed = 7

lib = TemplateLibrary()
spec = DatasetSpec(classes=('COFFEE', 'TEA', 'MILK'), signers=6,
        repetitions_per_class=5, master_seed=seed)
ds = generate_dataset(spec, lib, threads=4)
write_dataset(ds, 'data.jsonl')

split = SplitSpec(seed=child_seed(seed, 'split'))
train_ds, val_ds, test_ds = split_dataset(ds, split)

classes = tuple(sorted(set(ds.labels), key=sign_code))
net = build_network(NetConfig(class_names=classes, scale_factor='1/16'),
        child_seed(seed, 'init'))
tc = TrainConfig(epochs=50, batch_size=16, seed=seed,
        checkpoint_path='net.ckpt')
net, report = train(net, train_ds, val_ds, tc, split=split.to_dict(),
        threads=4)
report.write('net_report.csv')
plot_training(report, 'curves.png')

m = evaluate(net, test_ds, threads=4)
print(render_metrics(m).decode('utf-8'))
plot_confusion(m, 'confusion.png')

plan = LessonPlan(signs=('MILK', 'TEA', 'COFFEE'))
lesson = simulate_learner(plan, net, LearnerProfile(seed=seed), lib)
write_transcript(lesson, 'lesson.jsonl')
print('first try:', ', '.join(lesson.first_try_passes))
print('needs review:', ', '.join(lesson.needs_review))
