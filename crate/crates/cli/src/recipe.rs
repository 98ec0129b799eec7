pub const DESK_SCALE: &str = r#"# Desk-scale run: native small masked LM, bundled fixtures, a few minutes on one CPU.
set -e
OUT=${OUT:-runs/desk}
stereoprobe desk-init --out $OUT/base/model.json
stereoprobe probe    --model desk:$OUT/base/model.json --cache $OUT/cache --out $OUT/predictions.json
stereoprobe emotions --model desk:$OUT/base/model.json --cache $OUT/cache --out $OUT/emotions.json
stereoprobe recall   --model desk:$OUT/base/model.json --dataset data/dataset/sample.jsonl --k 5,10,25,50,100,200 --out $OUT/recall.json
stereoprobe finetune --model desk:$OUT/base/model.json --corpus data/corpus/finetune_fixture.jsonl --fraction 1 --seed 7 --out $OUT/tuned
stereoprobe diff     --before desk:$OUT/base/model.json --after desk:$OUT/tuned/model.json --top 15 --source fixture-news --dataset data/dataset/sample.jsonl --out $OUT/shift.json
stereoprobe rsa      --models desk:$OUT/base/model.json,desk:$OUT/tuned/model.json --out $OUT/rsa.json
stereoprobe report   $OUT/recall.json $OUT/emotions.json $OUT/rsa.json $OUT/shift.json --out $OUT/figures
"#;

pub const FULL_SCALE: &str = r#"# Full-scale run: nine pretrained checkpoints through the Python bridge
# (needs `transformers` and `torch`, several GB of downloads, and a GPU for
# the fine-tuning stage), the canonical stereotype dataset, the NRC
# emotion lexicon and the All-The-News articles of five outlets.
#
# Reference targets (not CI gates):
#   - RSA over all categories: RoBERTa-B vs BART-B, rho = 0.44, the highest pair
#   - per-outlet, per-category delta rho after one epoch: data/reference/delta_rho_by_source.csv
#   - recall@k curves per category for the nine checkpoints
set -e
OUT=${OUT:-runs/full}
DATASET=${DATASET:-data/dataset/stereotypes.jsonl}
LEXICON=${LEXICON:?path to NRC-Emotion-Lexicon-Wordlevel-v0.92.txt}
NEWS=${NEWS:?directory with newyorker.csv guardian.csv reuters.csv fox.csv breitbart.csv}
MODELS="bert-base-uncased bert-large-uncased roberta-base roberta-large facebook/bart-base facebook/bart-large bert-base-multilingual-uncased xlm-roberta-base xlm-roberta-large"
BASE="bert-base-uncased roberta-base facebook/bart-base bert-base-multilingual-uncased xlm-roberta-base"

SPECS=""
for m in $MODELS; do
  tag=$(echo $m | tr '/' '_')
  stereoprobe probe    --model bridge:$m --k 200 --cache $OUT/cache --out $OUT/predictions_$tag.json
  stereoprobe recall   --model bridge:$m --dataset $DATASET --k 5,10,25,50,100,200 --cache $OUT/cache --out $OUT/recall_$tag.json
  stereoprobe emotions --model bridge:$m --lexicon $LEXICON --cache $OUT/cache --out $OUT/emotions_$tag.json
  SPECS="$SPECS${SPECS:+,}bridge:$m"
done
stereoprobe rsa --models $SPECS --lexicon $LEXICON --cache $OUT/cache --out $OUT/rsa_models.json

for m in $BASE; do
  tag=$(echo $m | tr '/' '_')
  for src in newyorker guardian reuters fox breitbart; do
    for frac in 0.25 0.5 1; do
      run=$OUT/tuned/$tag/$src-$frac
      spec=$(stereoprobe finetune --model bridge:$m --corpus $NEWS/$src.csv --source $src --fraction $frac --seed 7 --out $run)
      stereoprobe diff --before bridge:$m --after $spec --top 15 --source $src \
        --dataset $DATASET --lexicon $LEXICON --out $run/shift.json
    done
  done
done
stereoprobe report $OUT/recall_*.json $OUT/rsa_models.json $OUT/tuned/*/*/shift.json --out $OUT/figures
"#;
