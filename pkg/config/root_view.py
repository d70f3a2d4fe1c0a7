from django.shortcuts import redirect


def root_view(request):
    """Send visitors to the run listing."""
    return redirect('/api/v1/runs/')
