from django.db import models


class AccessionCodeModel(models.Model):
    """
    Abstract base model with an accession code derived from the primary key.
    Subclasses must define a PREFIX class attribute.
    """
    accession_code = models.CharField(max_length=255, unique=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True
        ordering = ['id']

    def save(self, *args, **kwargs):
        # the code needs the primary key, so new rows are saved twice
        if not self.pk and not self.accession_code:
            self.accession_code = f'pending-{id(self)}'
            super().save(*args, **kwargs)
            self.accession_code = f'{self.PREFIX}{self.pk}'
            kwargs.pop('force_insert', None)
            super().save(update_fields=['accession_code'])
        else:
            super().save(*args, **kwargs)

    def __str__(self):
        return self.accession_code
